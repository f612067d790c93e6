# %% [markdown]
# The inductive encoder on a toy graph, and a finite-difference check of
# its training gradient.

# %%
import numpy as np

from sgrl.encoder import EncoderConfig, graph_plan, ig_forward, ig_loss_and_grad, init_encoder, param_count
from sgrl.graph import build_graph
from sgrl.numeric import grad_check

edges = [(0, 1), (1, 2), (2, 3), (3, 0), (3, 4)]
attrs = np.array(
    [[1, 0, 1, 0, 0, 0, 0], [0, 1, 0, 1, 0, 0, 1], [0, 0, 0, 0, 1, 1, 0],
     [1, 1, 0, 1, 0, 0, 0], [0, 0, 1, 0, 0, 1, 1]],
    dtype=np.int8,
)
g = build_graph(edges, 5, attrs, labels={0: 0, 1: 1, 3: 1, 4: 0})

cfg = EncoderConfig(f=4, f1=8)
params = init_encoder(cfg, np.random.default_rng(0), dtype=np.float64)
H, scores = ig_forward(params, g)
print("representation norms:", np.round(np.linalg.norm(H, axis=1), 4))
print("untrained scores:", np.round(scores, 3))

# %% Gradient check: analytic vs central differences, relative error
rows = g.labeled()
y = g.labels[rows].astype(float)
plan = graph_plan(g)
err = grad_check(lambda p: ig_loss_and_grad(p, plan, rows, y), params, max_coords=30)
print(f"max relative error {err:.2e}")

# %% Closed-form model size at the default widths
print("closed form (2, 32, 56):", param_count(2, 32, 56))
