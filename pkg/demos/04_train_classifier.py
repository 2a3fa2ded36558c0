"""
Training a small classifier
===========================

Generate a toy two-class dataset, train a reduced network for a few epochs
and evaluate it on the held-out split. The full-size network trains the
same way, only slower.
"""
import tempfile
from pathlib import Path

from meshlearn import RunConfig, evaluate, gen_synthetic, infer, load_dataset, load_obj, train

root = Path(tempfile.mkdtemp())
gen_synthetic(root / "data", "cls", n_classes=2, count=8, target_edges=150, seed=0)
ds = load_dataset(root / "data", "cls")
print("classes:", ds.class_names, "train meshes:", len(ds.split("train")))

cfg = RunConfig(task="classification", input_edges=150, pool_targets=(120, 90, 60, 45),
                conv_channels=(8, 8, 8, 8), fc_dims=(16,), norm_groups=4,
                epochs=12, lr=0.002, batch_size=4)
result = train(ds, cfg, out_dir=root / "run", emit=print)

#%%
print("test metrics:", evaluate(result.best_checkpoint, ds))

#%%
# Classify one mesh and keep the intermediate pooled meshes for a look.
mesh = load_obj(ds.split("test")[0].path)
label, paths = infer(result.best_checkpoint, mesh, export_dir=root / "pools")
print("predicted", ds.class_names[label], "- pooled meshes:", [p.name for p in paths])
