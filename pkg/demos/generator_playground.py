"""Build generators, push latents through them, and sanity-check the
adjoint derivative against finite differences.

Run: python3 demos/generator_playground.py
"""

import tempfile

import numpy as np

from genpgd import (
    forward,
    forward_batch,
    load_network,
    make_linear_generator,
    make_random_generator,
    save_network,
    vjp,
)

rng = np.random.default_rng(0)

# a single affine layer with orthonormal columns: its range is a k-plane
W = np.linalg.qr(rng.standard_normal((12, 3)))[0]
flat = make_linear_generator(W)
print(f"linear generator: {flat.k} -> {flat.n}, depth {flat.d}")

z = rng.standard_normal(3)
x = forward(flat, z)
print(f"  |G(z)| = {np.linalg.norm(x):.6f}  (equals |z| = {np.linalg.norm(z):.6f} "
      "because the columns are orthonormal)")

# a deeper nonlinear one; widths must grow from k up to n
deep = make_random_generator(2, 20, 3, (6, 12), activation="relu", seed=1)
print(f"relu generator: {deep.k} -> {deep.n}, depth {deep.d}, widths 2/6/12/20")

# batched forward wants latents as columns
Z = rng.standard_normal((2, 5))
X = forward_batch(deep, Z)
print(f"  batched forward of 5 latent columns -> outputs with shape {X.shape}")

# vjp(net, z, w) returns J(z)^T w; check one directional derivative by
# central differences
z = rng.standard_normal(2)
w = rng.standard_normal(20)
u = vjp(deep, z, w)
h = 1e-6
fd = np.array([
    float(w @ (forward(deep, z + h * e) - forward(deep, z - h * e))) / (2 * h)
    for e in np.eye(2)
])
print(f"  vjp vs finite differences: max abs diff {np.max(np.abs(u - fd)):.2e}")

# networks round-trip through a JSON file
with tempfile.TemporaryDirectory() as d:
    path = f"{d}/net.json"
    save_network(deep, path)
    again = load_network(path)
    same = np.array_equal(forward(again, z), forward(deep, z))
    print(f"save/load round trip reproduces the forward map exactly: {same}")
