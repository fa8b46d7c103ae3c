"""Run the whole grid command by command, stopping at the first failing stage."""

import os
import subprocess
import sys
from pathlib import Path

STAGES = ["train", "estimate", "entropy", "oracle", "extrapolate", "report"]


def main() -> None:
    project_root = Path(__file__).resolve().parents[1]
    config = sys.argv[1] if len(sys.argv) > 1 else os.environ.get("HAN_CONFIG", "config/default.toml")

    python_exe = sys.executable

    for stage in STAGES:
        cmd = [python_exe, "main.py", stage, "--config", config]
        print(f"Running: {' '.join(cmd)}")
        result = subprocess.run(cmd, cwd=project_root, check=False)
        if result.returncode != 0:
            raise SystemExit(result.returncode)

    print("✅ Grid finished.")


if __name__ == "__main__":
    main()
