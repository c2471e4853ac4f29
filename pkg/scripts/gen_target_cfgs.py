#!/usr/bin/env python3
"""Regenerate the control-flow description JSON shipped with each target.

The descriptions are authored in code (each target module's
cfg_description function) and committed as JSON so that analysis tools
can load them without importing target code. Run this after changing a
target's block or edge layout; a unit test fails if the committed files
drift from the authored graphs.
"""

import argparse
import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(SRC))

from predfuzz.cfg import save_cfg_description  # noqa: E402
from predfuzz.targets import bzh, jsonmini, minilang  # noqa: E402

MODULES = {"bzh": bzh, "json": jsonmini, "minilang": minilang}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--check",
        action="store_true",
        help="verify committed files match the authored graphs instead of writing",
    )
    args = parser.parse_args()
    data_dir = SRC / "predfuzz" / "targets" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    stale = []
    for name, module in MODULES.items():
        text = save_cfg_description(module.cfg_description())
        path = data_dir / module.BINDING.cfg_file
        if args.check:
            if not path.exists() or path.read_text() != text:
                stale.append(path.name)
        else:
            path.write_text(text)
            print(f"wrote {path} ({len(text)} bytes)")
    if stale:
        print("stale description files: " + ", ".join(stale))
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
