"""Minimal dense autoencoder trained by per-row gradient descent.

One hidden layer, logistic sigmoid on both layers, squared-error loss
averaged over output units.  Training is strictly online: each call to
:meth:`step` runs one forward/backward pass on a single row and applies
the update immediately.  All weight state is float64 numpy.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class TinyAutoencoder:
    def __init__(self, n_visible: int, n_hidden: int, rng: np.random.Generator):
        if n_visible < 1 or n_hidden < 1:
            raise ValueError("layer sizes must be >= 1")
        self.n_visible = n_visible
        self.n_hidden = n_hidden
        a1 = 1.0 / n_visible
        a2 = 1.0 / n_hidden
        self.W1 = rng.uniform(-a1, a1, size=(n_visible, n_hidden))
        self.b1 = np.zeros(n_hidden)
        self.W2 = rng.uniform(-a2, a2, size=(n_hidden, n_visible))
        self.b2 = np.zeros(n_visible)

    # -- forward ----------------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = expit(x @ self.W1 + self.b1)
        y = expit(h @ self.W2 + self.b2)
        return h, y

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[1]

    def loss(self, x: np.ndarray) -> float:
        _, y = self.forward(x)
        d = y - x
        return float(np.mean(d * d))

    def rmse(self, X: np.ndarray) -> np.ndarray:
        """Per-row reconstruction RMSE for a 2-d batch."""
        Y = self.reconstruct(X)
        return np.sqrt(np.mean((Y - X) ** 2, axis=1))

    # -- training ---------------------------------------------------------

    def gradients(self, x: np.ndarray):
        """Loss gradients for one row: (dW1, db1, dW2, db2)."""
        h, y = self.forward(x)
        delta2 = (2.0 / self.n_visible) * (y - x) * y * (1.0 - y)
        dW2 = np.outer(h, delta2)
        db2 = delta2
        delta1 = (delta2 @ self.W2.T) * h * (1.0 - h)
        dW1 = np.outer(x, delta1)
        db1 = delta1
        return dW1, db1, dW2, db2

    def step(self, x: np.ndarray, lr: float) -> float:
        """One SGD update on a single row; returns the pre-update
        reconstruction RMSE of that row."""
        h, y = self.forward(x)
        err = y - x
        delta2 = (2.0 / self.n_visible) * err * y * (1.0 - y)
        delta1 = (delta2 @ self.W2.T) * h * (1.0 - h)
        self.W2 -= lr * np.outer(h, delta2)
        self.b2 -= lr * delta2
        self.W1 -= lr * np.outer(x, delta1)
        self.b1 -= lr * delta1
        return float(np.sqrt(np.mean(err * err)))

    # -- parameter vector (used by the finite-difference check) -----------

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [self.W1.ravel(), self.b1, self.W2.ravel(), self.b2]
        )

    def set_params(self, flat: np.ndarray) -> None:
        sizes = [self.W1.size, self.b1.size, self.W2.size, self.b2.size]
        if flat.shape != (sum(sizes),):
            raise ValueError("parameter vector has wrong length")
        i = 0
        self.W1 = flat[i : i + sizes[0]].reshape(self.W1.shape).copy()
        i += sizes[0]
        self.b1 = flat[i : i + sizes[1]].copy()
        i += sizes[1]
        self.W2 = flat[i : i + sizes[2]].reshape(self.W2.shape).copy()
        i += sizes[2]
        self.b2 = flat[i:].copy()

    def flat_gradients(self, x: np.ndarray) -> np.ndarray:
        dW1, db1, dW2, db2 = self.gradients(x)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
