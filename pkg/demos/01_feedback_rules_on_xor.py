# %% [markdown]
# # Five ways to send an error backwards
#
# All rules share the forward pass and the local update dW = delta h^T.
# They differ only in the matrix that carries delta down one layer.
# XOR is small enough to watch every rule learn.

# %%
import numpy as np

from signsym import FeedbackState, Rule, feedback_matrix, forward, mlp, train

X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
T = np.array([[0.0], [1.0], [1.0], [0.0]])

# %% [markdown]
# The feedback matrix for a toy weight.  uSF keeps only the signs, frSF
# scales them by a fixed positive random matrix, brSF redraws that matrix
# after every update.  FA ignores W altogether.

# %%
W = np.array([[2.0, -3.0], [0.0, 1.0]])
print("W^T       ", feedback_matrix("BP", W, None, 1).tolist())
print("sign(W^T) ", feedback_matrix("uSF", W, None, 1).tolist())

net = mlp([2, 2, 2], seed=0)
state = FeedbackState("frSF", net, seed=0)
print("M o sign  ", np.round(feedback_matrix("frSF", net.layers[1].weight, state, 1), 3).tolist())

# %% [markdown]
# Train the same 2-8-1 tanh net with every rule.  With a single output,
# frSF only rescales each hidden unit's error by a fixed factor, which
# ADAM's per-parameter normalisation cancels, so frSF tracks uSF closely.

# %%
for rule in Rule:
    net = mlp([2, 8, 1], activation="tanh", out_activation="sigmoid", head=("classifier", 1),
              seed=0)
    res = train(net, (X, T), rule, "squared", epochs=2000, batch_size=4, lr=0.05, seed=0,
                weight_decay=0.0)
    out = forward(res.net, X).output.ravel()
    print(f"{rule.value:5s} final loss {res.losses[-1]:.2e}  outputs {np.round(out, 2)}")

# %% [markdown]
# brSF touches the random stream once per update, so the magnitudes seen
# by the first and last update have nothing in common.

# %%
state = FeedbackState("brSF", mlp([2, 8, 1], seed=0), seed=1)
before = state.M[1].copy()
state.redraw()
print("fraction of M entries redrawn:", np.mean(state.M[1] != before))
