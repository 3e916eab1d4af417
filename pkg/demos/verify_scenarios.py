"""Run the verifier over every bundled system scenario and print one table.

Each scenario states which checks it expects to fail; negative controls
such as the gradient flow and the right-perturbed rotation are expected
to fail most checks, and the run only counts unexpected outcomes.
"""

import json
import tempfile
from pathlib import Path

from linobs.cli import consolidate, main
from linobs.scenario import load_scenario, shipped_path, shipped_scenarios


def main_demo():
    out = Path(tempfile.mkdtemp())
    docs, unexpected = [], 0
    for name in shipped_scenarios():
        if load_scenario(shipped_path(name)).system is None:
            continue
        path = out / name
        print(f"== {name}")
        code = main(["verify", "--config", name, "--out", str(path)])
        unexpected += code != 0
        docs.append(json.loads(path.read_text()))
    print()
    print(consolidate(docs))
    print(f"\nscenarios with unexpected outcomes: {unexpected}")


if __name__ == "__main__":
    main_demo()
