# %% [markdown]
# # The full five-seed comparison from the command line
#
# Drives the `acorl` CLI exactly as a user would. It trains A, plain B and
# alliance B for five seeds, then builds three late fusions per seed:
#
# - A + B (independent)
# - A + B (alliance)
# - A + A (redundancy control)
#
# It also runs weighted output fusion of A with each B and aggregates
# everything into a table. Expect about 8 minutes on one core. Pass
# `--jobs N` below to spread seeds over N processes.

# %%
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "canonical.yaml"
OUT = ROOT / "runs" / "canonical"
SEEDS = ["0", "1", "2", "3", "4"]


def acorl(*args):
    cmd = [sys.executable, "-m", "acorl", *args, "--config", str(CONFIG), "--out", str(OUT), "--quiet"]
    print("$", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)


# %% [markdown]
# Data and the three single models. `train-acorl` reads `avoid:` from the
# config (checkpoints/A.ckpt, resolved inside each seed directory).

# %%
acorl("gen-data", "--seed", *SEEDS)
acorl("train", "--model", "A", "--seed", *SEEDS)
acorl("train", "--model", "B", "--seed", *SEEDS)
acorl("train-acorl", "--model", "B", "--seed", *SEEDS)

# %% [markdown]
# Fusions. `--members` overrides `fusion.members`, and the fused checkpoint
# is named after its members.

# %%
for members in (["A", "B"], ["A", "B_acorl"], ["A", "A"]):
    paths = [f"checkpoints/{m}.ckpt" for m in members]
    acorl("fuse-late", "--members", *paths, "--seed", *SEEDS)
for members in (["A", "B"], ["A", "B_acorl"]):
    acorl("fuse-output", "--members", *[f"checkpoints/{m}.ckpt" for m in members], "--seed", *SEEDS)

# %% [markdown]
# Evaluate everything, attribute the single models, and build the table.

# %%
acorl("eval", "--seed", *SEEDS)
acorl("attribute", "--seed", *SEEDS)
acorl("report")
print((OUT / "report.txt").read_text())
