"""
Convolution over edges
======================

An edge and its four neighbours (a, b) and (c, d) form the receptive field.
The kernel sees (e, |a - c|, a + c, |b - d|, b + d), which is unchanged
when the two faces are listed in the other order. The whole layer is one
gather followed by one matrix product.
"""
import numpy as np

from meshlearn import ConvKernel, build_edge_topology, compute_input_features, mesh_conv_forward
from meshlearn.synthetic import icosphere

rng = np.random.default_rng(0)
mesh = icosphere(2)
topo = build_edge_topology(mesh)
x = compute_input_features(mesh, topo)

kernel = ConvKernel.init(5, 16, rng)
y = mesh_conv_forward(kernel, x, topo)
print("input", x.shape, "-> output", y.shape)

#%%
# Swap the face order of every edge: the neighbour pairs trade places and
# the output does not move by a single bit.
flipped = topo.swap_face_order(np.ones(topo.n_edges, dtype=bool))
y2 = mesh_conv_forward(kernel, x, flipped)
print("bit-identical after swapping face order:", np.array_equal(y.data, y2.data))

#%%
# The result is a differentiable tensor, so gradients flow back to the kernel.
from meshlearn import autodiff as ad

with ad.Tape() as tape:
    out = mesh_conv_forward(kernel, x, topo)
    loss = ad.sum_all(ad.relu(out))
grads = tape.backward(loss, kernel.parameters())
print("weight gradient norm:", float(np.linalg.norm(grads[kernel.weight])))
