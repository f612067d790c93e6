# %% [markdown]
# A look at the synthetic benchmark: a random background population with
# planted seller motifs.  Each motif is one seller wired to transaction,
# service, camouflage and buyer accounts; the first three roles are the
# positives.  Attributes 1 and 3 are the informative ones.

# %%
from sgrl.graph import precompute_subgraphs
from sgrl.synthgen import ROLES, default_config, generate

cfg = default_config()
data = generate(cfg)
g = data.graph
print(f"{g.n} nodes, {g.n_edges} edges, {int(data.truth.sum())} planted positives")
print("observed labels:", int(data.observed.sum()))

# %% Degree profile per role
for code, role in enumerate(ROLES):
    deg = g.degrees[data.roles == code]
    if len(deg):
        print(f"{role:12s} n={len(deg):5d}  mean degree {deg.mean():5.2f}")

# %% Attribute rates split by class
a = g.attributes.astype(float)
pos, neg = a[data.truth == 1].mean(axis=0), a[data.truth == 0].mean(axis=0)
for j in range(7):
    print(f"attr {j}: positives {pos[j]:.2f}  others {neg[j]:.2f}")

# %% The 1-hop ball of one seller is dominated by its own motif
index = precompute_subgraphs(g, 1)
s = data.sellers[0]
ball = index[s]
print(f"seller {s}: ball of {len(ball)} nodes, {int(data.truth[ball].sum())} positives")
