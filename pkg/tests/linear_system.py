"""A random linear-Gaussian test system and a textbook Kalman filter."""

import numpy as np


class LinearSystem:
    def __init__(self, seed=0, n=7, m=4):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, n)) * 0.1
        self.F = np.eye(n) + A - A.T * 0.5
        self.F /= max(1.0, np.max(np.abs(np.linalg.eigvals(self.F))))
        self.B = rng.standard_normal((n, 3)) * 0.1
        self.H = rng.standard_normal((m, n))
        L = rng.standard_normal((n, n)) * 0.05
        self.Q = L @ L.T + 1e-4 * np.eye(n)
        self.R = np.diag(rng.uniform(0.05, 0.2, m))
        self.x0 = rng.standard_normal(n)
        self.P0 = np.eye(n) * 0.5
        self.rng = rng

    def process(self, chi, u, dt):
        return chi @ self.F.T + self.B @ u

    def jacobian(self, x, u, dt):
        return self.F

    def measure(self, chi):
        return chi @ self.H.T

    def observation_jacobian(self, x):
        return self.H

    def simulate(self, steps):
        x = self.x0.copy()
        data = []
        for _ in range(steps):
            u = self.rng.standard_normal(3)
            x = self.F @ x + self.B @ u + self.rng.multivariate_normal(np.zeros(len(x)), self.Q)
            y = self.H @ x + self.rng.multivariate_normal(np.zeros(len(self.R)), self.R)
            data.append((u, y))
        return data


def kalman_step(x, P, u, y, sys):
    x = sys.F @ x + sys.B @ u
    P = sys.F @ P @ sys.F.T + sys.Q
    S = sys.H @ P @ sys.H.T + sys.R
    K = P @ sys.H.T @ np.linalg.inv(S)
    x = x + K @ (y - sys.H @ x)
    P = P - K @ S @ K.T
    return x, 0.5 * (P + P.T)
