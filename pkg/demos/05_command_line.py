"""
The command line
================

The same workflow through ``python3 -m meshlearn``: generate data, inspect a
mesh, train from a config file, evaluate and infer. Each call below is what
you would type in a shell.
"""
import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp())


def run(*args):
    print("$ meshlearn", " ".join(args))
    out = subprocess.run([sys.executable, "-m", "meshlearn", *args], capture_output=True, text=True)
    print(out.stdout.strip() or out.stderr.strip(), "\n")


run("gen-synthetic", "--out", str(root / "data"), "--task", "cls", "--count", "6", "--edges", "150")
mesh = sorted((root / "data").rglob("*.obj"))[0]
run("inspect", "--input", str(mesh))

(root / "run.cfg").write_text(
    "task = cls\n"
    "data_dir = data\n"
    "input_edges = 150\n"
    "pool_targets = 120, 90, 60, 45\n"
    "conv_channels = 8, 8, 8, 8\n"
    "fc_dims = 16\n"
    "norm_groups = 4\n"
    "epochs = 3\n"
    "lr = 0.002\n"
)
run("train", "--config", str(root / "run.cfg"))
run("evaluate", "--checkpoint", str(root / "run" / "best.ckpt"), "--data", str(root / "data"))
run("infer", "--checkpoint", str(root / "run" / "best.ckpt"), "--input", str(mesh),
    "--export-pools", str(root / "pools"))
