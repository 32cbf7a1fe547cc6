"""Locate where the five-qubit code with its syndrome decoder falls below a bare qubit under thermal relaxation.

Uses the device constants from configs/thermal.json unless overridden.
"""

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from vgqec import channels as ch
from vgqec import codes as cd

ROOT = Path(__file__).resolve().parent.parent


def margin(t: float, t1s, t2s, bare: int = 0) -> float:
    noise = ch.thermal_layers(t, t1s, t2s)
    enc = cd.five_one_three_encoder()
    coded = ch.composite_fidelity(cd.standard_decoder("fiveonethree"), ch.as_kraus(noise), enc.channel())
    return coded - ch.channel_fidelity(ch.thermal_relaxation(t, t1s[bare], t2s[bare]))


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "thermal.json"))
    p.add_argument("--t-max", type=float, default=8.0)
    p.add_argument("--bare", type=int, default=0, help="qubit whose constants define the unprotected baseline")
    args = p.parse_args()
    noise = json.loads(Path(args.config).read_text())["noise"]
    t1s, t2s = noise["t1"], noise["t2"]
    ts = np.arange(0.5, args.t_max + 1e-9, 0.5)
    vals = [margin(t, t1s, t2s, args.bare) for t in ts]
    for t, v in zip(ts, vals):
        print(f"t={t:4.1f}  coded - bare = {v:+.6f}")
    for a, b, va, vb in zip(ts, ts[1:], vals, vals[1:]):
        if va > 0 >= vb:
            x = brentq(margin, a, b, args=(t1s, t2s, args.bare), xtol=1e-4)
            print(f"coded fidelity drops below the bare qubit at t ~ {x:.3f}")
            return
    print("no crossover within the scanned range")


if __name__ == "__main__":
    main()
