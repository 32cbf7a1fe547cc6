"""Run one config twice and report whether the CSV output is byte-identical."""

import argparse
import filecmp
import os
import tempfile

from vgqec.expcli import cli_main


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config")
    p.add_argument("--threads", nargs=2, default=["1", "2"], help="worker counts for the two runs")
    args = p.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for i, threads in enumerate(args.threads):
            os.environ["VGQEC_THREADS"] = threads
            out = os.path.join(tmp, f"run{i}.csv")
            code = cli_main(["run", args.config, "--output", out])
            if code:
                raise SystemExit(code)
            paths.append(out)
        same = filecmp.cmp(*paths, shallow=False)
    print("identical" if same else "different")
    raise SystemExit(0 if same else 1)


if __name__ == "__main__":
    main()
