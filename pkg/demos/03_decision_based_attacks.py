# %% [markdown]
# # Attacks that only see labels
#
# Boundary Attack and HopSkipJump get a predict-only oracle and a query
# budget.  On a linear model the true distance to the decision boundary is
# known in closed form, which makes it easy to see how close each gets.

# %%
import numpy as np

from signsym.attacks import AttackSpec, boundary_attack, hsja, label_oracle
from signsym.network import Dense, Network

rng = np.random.default_rng(0)
w = rng.normal(size=2)
net = Network([Dense(np.stack([w, -w]), np.zeros(2), "identity")], (2,), ("classifier", 2))
oracle = label_oracle(net)

# %%
for budget in (50, 200, 1000):
    rows = []
    for seed in range(10):
        x = rng.uniform(-0.5, 0.5, size=2)
        y = int(oracle(x[None])[0])
        true = abs(w @ x) / np.linalg.norm(w)
        kw = dict(query_budget=budget, data_range=(-5.0, 5.0), seed=seed)
        b = boundary_attack(oracle, x, y, AttackSpec("Boundary", **kw))
        h = hsja(oracle, x, y, AttackSpec("HSJA", **kw))
        rows.append((b.l2 / true, h.l2 / true))
    ratio = np.array(rows)
    print(f"budget {budget:5d}: found/true distance  boundary {np.median(ratio[:, 0]):.3f}  "
          f"hsja {np.median(ratio[:, 1]):.3f}")

# %% [markdown]
# The accepted Boundary iterates only ever move closer to the input.

# %%
x = np.array([0.2, -0.1])
res = boundary_attack(oracle, x, int(oracle(x[None])[0]),
                      AttackSpec("Boundary", query_budget=300, data_range=(-5, 5)))
print(np.round(res.history[:12], 4))
