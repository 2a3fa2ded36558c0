"""
Edge features of a triangle mesh
================================

Every edge with two incident faces gets five numbers: the dihedral angle,
the two inner angles opposite the edge and the two edge-length to height
ratios. The pairs are sorted, so the descriptor does not depend on which
face is listed first, and none of the numbers change under rotation,
translation or uniform scaling.
"""
import numpy as np

from meshlearn import build_edge_topology, compute_input_features
from meshlearn.features import compute_midpoint_features
from meshlearn.synthetic import icosphere, random_similarity

mesh = icosphere(2)
topo = build_edge_topology(mesh)
print(f"{topo.n_vertices} vertices, {topo.n_edges} edges, {topo.n_faces} faces")

# each edge has four neighbours: two per incident face
print("neighbours of edge 0:", topo.neighbors[0])

x = compute_input_features(mesh, topo)
print("feature tensor:", x.shape)
for name, row in zip(["dihedral", "angle lo", "angle hi", "ratio lo", "ratio hi"], x):
    print(f"  {name:9s} mean {row.mean():.4f}  std {row.std():.4f}")

#%%
# Move, rotate and rescale the mesh. The invariant features stay put while the
# raw midpoint coordinates change completely.
moved = random_similarity(mesh, np.random.default_rng(0))
moved_topo = build_edge_topology(moved)
print("invariant max change:", np.abs(compute_input_features(moved, moved_topo) - x).max())
print("midpoint max change: ",
      np.abs(compute_midpoint_features(moved, moved_topo) - compute_midpoint_features(mesh, topo)).max())

#%%
# Stretching along one axis is not a similarity, so the invariant features do move.
stretched = mesh.transformed(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
print("after a 2x stretch:  ", np.abs(compute_input_features(stretched, build_edge_topology(stretched)) - x).max())
