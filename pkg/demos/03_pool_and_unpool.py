"""
Pooling by edge collapse, and undoing it
========================================

Pooling collapses the edges with the smallest feature norm first. Each
collapse removes one vertex, two faces and three edges, and merges the
features of the two triangles that vanish into their surviving edges.
Unpooling uses the recorded history to restore the original connectivity.
"""
import numpy as np

from meshlearn import build_edge_topology, compute_input_features, euler_characteristic, mesh_pool, mesh_unpool
from meshlearn.mesh import topology_to_mesh
from meshlearn.synthetic import capsule

mesh, _ = capsule(segments=16, rings=16)
topo = build_edge_topology(mesh)
x = compute_input_features(mesh, topo)
print(f"before: V={topo.n_vertices} E={topo.n_edges} F={topo.n_faces}")

target = topo.n_edges - 150
pooled, y, history = mesh_pool(topo, x, target)
print(f"after:  V={pooled.n_vertices} E={pooled.n_edges} F={pooled.n_faces} "
      f"({history.n_collapses} collapses)")
print("Euler characteristic still", euler_characteristic(topology_to_mesh(pooled)))

#%%
# Where did edge 0 go? ``mapping`` lists the pooled edges it flows into.
print("edge 0 ->", history.mapping[0])

#%%
# Unpooling returns the pre-pool topology and spreads pooled features back.
# A constant signal survives the round trip exactly.
restored_topo, restored = mesh_unpool(y, history)
print("same edges as before pooling:", np.array_equal(restored_topo.edges, topo.edges))
const = np.full((3, pooled.n_edges), 0.7)
print("constant fixed point:", np.array_equal(mesh_unpool(const, history)[1], np.full((3, topo.n_edges), 0.7)))

#%%
# Random priorities are available for comparison.
_, _, rand_history = mesh_pool(topo, x, target, mode="random", seed=1)
print("random mode also made", rand_history.n_collapses, "collapses")
