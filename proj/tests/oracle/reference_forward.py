#!/usr/bin/env python3
"""Straight-line re-implementation of the model forward pass.

Builds random tiny models, writes them as checkpoints, runs a sequence of
train/eval forward passes and freezes the logits into a fixture that the
C++ suite replays. Uses textbook acosh formulas and a generic optimizer for
Frechet means, sharing no code with the library.

    python3 tests/oracle/reference_forward.py tests/data/forward_oracle.json
"""

import json
import math
import sys

import numpy as np
from scipy.optimize import minimize

LN_EPS = 1e-5
PRIOR_EPS = 1e-6


# ---- Lorentz model -------------------------------------------------------

def linner(u, v):
    return float(u[1:] @ v[1:] - u[0] * v[0])


def from_space(s, k):
    return np.concatenate([[math.sqrt(s @ s - 1.0 / k)], s])


def dist(p, q, k):
    beta = max(1.0, k * linner(p, q))
    return math.acosh(beta) / math.sqrt(-k)


def exp_o(v, k):
    r = np.linalg.norm(v)
    sk = math.sqrt(-k)
    if r == 0.0:
        return from_space(np.zeros_like(v), k)
    return np.concatenate([[math.cosh(sk * r) / sk], math.sinh(sk * r) / (sk * r) * v])


def log_o(p, k):
    s = p[1:]
    r = np.linalg.norm(s)
    sk = math.sqrt(-k)
    if r == 0.0:
        return np.zeros_like(s)
    return math.asinh(sk * r) / (sk * r) * s


def exp_p(p, v, k):
    n = math.sqrt(max(linner(v, v), 0.0))
    sk = math.sqrt(-k)
    if n == 0.0:
        return p.copy()
    q = math.cosh(sk * n) * p + math.sinh(sk * n) / (sk * n) * v
    return from_space(q[1:], k)


def log_p(p, q, k):
    beta = k * linner(p, q)
    if beta <= 1.0:
        return np.zeros_like(p)
    return math.acosh(beta) / math.sqrt(beta * beta - 1.0) * (q - beta * p)


def transport(p, q, v, k):
    return v - k * linner(q, v) / (1.0 + k * linner(p, q)) * (p + q)


def origin(n, k):
    return from_space(np.zeros(n), k)


def gyro_add(p, q, k):
    o = origin(len(p) - 1, k)
    v = np.concatenate([[0.0], log_o(q, k)])
    return exp_p(p, transport(o, p, v, k), k)


def gyro_inv(p):
    return np.concatenate([[p[0]], -p[1:]])


def gyro_scale(t, p, k):
    return exp_o(t * log_o(p, k), k)


def rescale(p, k_old, k_new):
    return exp_o(math.sqrt(k_old / k_new) * log_o(p, k_old), k_new)


def frechet_mean(points, k, weights=None):
    points = [np.asarray(p) for p in points]
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    def objective(x):
        mu = from_space(x, k)
        return sum(wi * dist(mu, p, k) ** 2 for wi, p in zip(w, points))

    def gradient(x):
        # Chain rule through beta = K <mu, p>_L and mu_t = sqrt(|x|^2 - 1/K).
        mu = from_space(x, k)
        g = np.zeros_like(mu)
        for wi, p in zip(w, points):
            beta = k * linner(mu, p)
            if beta <= 1.0 + 1e-15:
                continue
            dd = 2.0 * math.acosh(beta) / (-k * math.sqrt(beta * beta - 1.0))
            g += wi * dd * k * np.concatenate([[-p[0]], p[1:]])
        return g[1:] + g[0] * x / mu[0]

    def riemannian_norm(mu):
        g = sum(wi * log_p(mu, p, k) for wi, p in zip(w, points))
        return math.sqrt(max(linner(g, g), 0.0))

    x0 = sum(wi * p[1:] for wi, p in zip(w, points))
    x = minimize(objective, x0, jac=gradient, method="BFGS", options={"gtol": 1e-14, "maxiter": 10000}).x
    mu = from_space(x, k)
    # Damped Karcher polish below the optimizer's stopping point.
    for _ in range(200):
        if riemannian_norm(mu) < 1e-13:
            break
        g = sum(wi * log_p(mu, p, k) for wi, p in zip(w, points))
        t = 1.0
        while t > 1e-6:
            cand = exp_p(mu, t * g, k)
            if riemannian_norm(cand) < riemannian_norm(mu):
                mu = cand
                break
            t *= 0.5
        else:
            break
    assert riemannian_norm(mu) < 1e-11, riemannian_norm(mu)
    return mu


def frechet_var(points, mu, k):
    return sum(dist(mu, p, k) ** 2 for p in points) / len(points)


def geodesic_point(p, q, t, k):
    return exp_p(p, t * log_p(p, q, k), k)


# ---- model pieces --------------------------------------------------------

def elu(x):
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def act(x, name):
    if name == "elu":
        return elu(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def curvature(raw):
    return -min(max(math.exp(raw), 0.1), 10.0)


def softplus(x):
    return x if x > 30.0 else math.log1p(math.exp(x))


def lin(p, P, k):
    return from_space(P["W"] @ p + P["b"], k)


def layer_norm_space(s, scale, shift):
    c = s - s.mean()
    return c / math.sqrt((c @ c) / len(s) + LN_EPS) * scale + shift


def hmlr(p, a, z, k):
    sk = math.sqrt(-k)
    out = []
    for ac, zc in zip(a, z):
        beta = np.linalg.norm(zc)
        alpha = math.cosh(sk * ac) * (zc @ p[1:]) - math.sinh(sk * ac) * beta * p[0]
        out.append(beta / sk * math.asinh(sk * alpha / beta))
    return np.array(out)


def softmax(z):
    z = np.asarray(z) - max(z)
    e = np.exp(z)
    return e / e.sum()


class Model:
    def __init__(self, ckpt):
        self.spec = ckpt["spec"]
        P = {k: np.array(v, dtype=float) if isinstance(v, list) else float(v) for k, v in ckpt["params"].items()}
        self.P = P
        self.names = self.spec["modalities"]
        self.hbn = {m: {} for m in self.names}
        self.ebn = {m: {} for m in self.names}
        self.hbn_cfg = self.spec["hbn"]

    def p(self, key):
        return self.P[key]

    def linear(self, pre):
        return {"W": self.p(pre + ".W"), "b": self.p(pre + ".b")}

    def encode(self, m, x):
        e = "experts." + m + ".encoder."
        return self.p(e + "W2") @ np.tanh(self.p(e + "W1") @ x + self.p(e + "b1")) + self.p(e + "b2")

    def momentum(self, mode, step):
        if mode == "train":
            return self.hbn_cfg["eta0"] * self.hbn_cfg["decay"] ** max(step, 0)
        return self.hbn_cfg["eta_test"]

    def hbn_step(self, m, pts, k, domain, mode, step):
        gamma = self.p("experts." + m + ".hbn_gamma")
        mu = frechet_mean(pts, k)
        var = frechet_var(pts, mu, k)
        store = self.hbn[m]
        eta = self.momentum(mode, step)
        if mode == "eval" and domain not in store:
            if store:
                means = [s[0] for s in store.values()]
                store[domain] = (frechet_mean(means, k), sum(s[1] for s in store.values()) / len(store))
            else:
                store[domain] = (origin(len(mu) - 1, k), 1.0)
        if domain in store:
            rm, rv = store[domain]
            store[domain] = (geodesic_point(rm, mu, eta, k), (1 - eta) * rv + eta * var)
        else:
            store[domain] = (mu, var)
        if mode == "eval":
            mu, var = store[domain]
        scale = gamma / math.sqrt(var + self.hbn_cfg["eps"])
        neg = gyro_inv(mu)
        return [gyro_scale(scale, gyro_add(neg, p, k), k) for p in pts]

    def ebn_step(self, m, xs, domain, mode, step):
        gamma = self.p("experts." + m + ".hbn_gamma")
        mu = np.mean(xs, axis=0)
        var = float(np.mean([(x - mu) @ (x - mu) for x in xs]))
        store = self.ebn[m]
        eta = self.momentum(mode, step)
        if mode == "eval" and domain not in store:
            if store:
                store[domain] = (np.mean([s[0] for s in store.values()], axis=0),
                                 sum(s[1] for s in store.values()) / len(store))
            else:
                store[domain] = (np.zeros_like(mu), 1.0)
        if domain in store:
            rm, rv = store[domain]
            store[domain] = ((1 - eta) * rm + eta * mu, (1 - eta) * rv + eta * var)
        else:
            store[domain] = (mu, var)
        if mode == "eval":
            mu, var = store[domain]
        scale = gamma / math.sqrt(var + self.hbn_cfg["eps"])
        return [(x - mu) * scale for x in xs]

    def forward(self, inputs, domain, mode, step):
        if self.spec["variant"] == "euclidean":
            return self.forward_euclidean(inputs, domain, mode, step)
        ks = [curvature(self.p("experts." + m + ".curvature_raw")) for m in self.names]
        kf = sum(ks) / len(ks)
        reps = []
        for m, k in zip(self.names, ks):
            x = np.asarray(inputs[m], dtype=float)
            lifted = [exp_o(self.encode(m, row), k) for row in x]
            normed = self.hbn_step(m, lifted, k, domain, mode, step)
            post = self.linear("experts." + m + ".post")
            reps.append([lin(from_space(act(p[1:], self.spec["activation"]), k), post, k) for p in normed])

        lam = softplus(self.p("fusion.lambda_raw"))
        tau0 = self.spec["tau0"]
        out = []
        for i in range(len(reps[0])):
            cur = [rescale(reps[m][i], ks[m], kf) for m in range(len(ks))]
            for l in range(self.spec["layers"]):
                pre = "fusion.layers[%d]" % l
                new = []
                for m in range(len(cur)):
                    heads = []
                    for h in range(self.spec["heads"]):
                        hp = pre + ".heads[%d]" % h
                        q = lin(cur[m], self.linear(hp + ".query"), kf)
                        others = [j for j in range(len(cur)) if j != m]
                        tau = tau0 / math.sqrt(-ks[m])
                        scores = []
                        for j in others:
                            kj = lin(cur[j], self.linear(hp + ".key"), kf)
                            s = -dist(q, kj, kf) ** 2 / tau
                            if l == 0:
                                s += lam * math.log(-ks[j] + PRIOR_EPS)
                            scores.append(s)
                        w = softmax(scores)
                        vals = [lin(cur[j], self.linear(hp + ".value"), kf) for j in others]
                        heads.append(vals[0] if len(vals) == 1 else frechet_mean(vals, kf, w))
                    merged = heads[0] if len(heads) == 1 else frechet_mean(heads, kf)
                    s = layer_norm_space(merged[1:], self.p(pre + ".ln_scale"), self.p(pre + ".ln_shift"))
                    new.append(from_space(s, kf))
                cur = new
            pooled = frechet_mean(cur, kf)
            fused = lin(pooled, self.linear("fusion.output"), kf)
            out.append(hmlr(fused, self.p("head.a"), self.p("head.z"), kf))
        return np.array(out)

    def forward_euclidean(self, inputs, domain, mode, step):
        def elin(x, P):
            return P["W"] @ np.concatenate([[1.0], x]) + P["b"]

        reps = []
        for m in self.names:
            x = np.asarray(inputs[m], dtype=float)
            normed = self.ebn_step(m, [self.encode(m, row) for row in x], domain, mode, step)
            post = self.linear("experts." + m + ".post")
            reps.append([elin(act(v, self.spec["activation"]), post) for v in normed])
        out = []
        for i in range(len(reps[0])):
            cur = [reps[m][i] for m in range(len(reps))]
            for l in range(self.spec["layers"]):
                pre = "fusion.layers[%d]" % l
                new = []
                for m in range(len(cur)):
                    merged = np.zeros_like(cur[m])
                    for h in range(self.spec["heads"]):
                        hp = pre + ".heads[%d]" % h
                        q = elin(cur[m], self.linear(hp + ".query"))
                        others = [j for j in range(len(cur)) if j != m]
                        w = softmax([q @ elin(cur[j], self.linear(hp + ".key")) / math.sqrt(len(q)) for j in others])
                        merged += sum(wj * elin(cur[j], self.linear(hp + ".value")) for wj, j in zip(w, others))
                    merged /= self.spec["heads"]
                    new.append(layer_norm_space(merged, self.p(pre + ".ln_scale"), self.p(pre + ".ln_shift")))
                cur = new
            fused = elin(np.mean(cur, axis=0), self.linear("fusion.output"))
            out.append(self.p("head.z") @ fused + self.p("head.a"))
        return np.array(out)


# ---- fixture generation --------------------------------------------------

def random_checkpoint(rng, names, dims, variant, layers, heads, k_init, d=4, hidden=3, classes=2):
    spec = {
        "modalities": names, "input_dims": dims, "classes": classes, "d": d, "hidden": hidden,
        "layers": layers, "heads": heads, "tau0": 0.8, "lambda_init": 0.3, "k_init": k_init,
        "activation": "elu", "variant": variant,
        "hbn": {"eps": 1e-5, "eta0": 0.9, "decay": 0.95, "eta_test": 0.1},
        "frechet": {"max_iters": 200, "tol": 1e-12, "step": 1.0},
    }

    def g(*shape, sd=0.5):
        return (sd * rng.standard_normal(shape)).tolist()

    def near_identity():
        W = 0.2 * rng.standard_normal((d, d + 1))
        W[:, 1:] += np.eye(d)
        return W.tolist(), g(d, sd=0.1)

    params = {}
    for m, n, k in zip(names, dims, k_init):
        e = "experts." + m
        params[e + ".encoder.W1"] = g(hidden, n, sd=0.8)
        params[e + ".encoder.b1"] = g(hidden, sd=0.2)
        params[e + ".encoder.W2"] = g(d, hidden, sd=0.8)
        params[e + ".encoder.b2"] = g(d, sd=0.2)
        params[e + ".curvature_raw"] = math.log(-k)
        params[e + ".hbn_gamma"] = 0.8 + 0.4 * float(rng.random())
        params[e + ".post.W"], params[e + ".post.b"] = near_identity()
    params["fusion.lambda_raw"] = math.log(math.expm1(0.3)) + 0.2
    for l in range(layers):
        pre = "fusion.layers[%d]" % l
        for h in range(heads):
            for part in ("query", "key", "value"):
                params[pre + ".heads[%d].%s.W" % (h, part)], params[pre + ".heads[%d].%s.b" % (h, part)] = near_identity()
        params[pre + ".ln_scale"] = (1.0 + 0.1 * rng.standard_normal(d)).tolist()
        params[pre + ".ln_shift"] = g(d, sd=0.1)
    params["fusion.output.W"], params["fusion.output.b"] = near_identity()
    params["head.a"] = g(classes, sd=0.3)
    params["head.z"] = g(classes, d, sd=0.7)

    ks = [curvature(params["experts." + m + ".curvature_raw"]) for m in names]
    state = {
        "hbn": {m: {"curvature": k, "domains": {}} for m, k in zip(names, ks)},
        "ebn": {m: {"domains": {}} for m in names},
    }
    return {"format_version": 1, "spec": spec, "params": params, "curvatures": ks,
            "lambda": softplus(params["fusion.lambda_raw"]), "state": state}


def make_case(rng, name, names, dims, variant, layers, heads, k_init):
    ckpt = random_checkpoint(rng, names, dims, variant, layers, heads, k_init)
    model = Model(ckpt)
    steps = []
    # Train pass seeds domain 0, a second train pass moves its running
    # stats, then eval on the seen domain and on an unseen one.
    for mode, domain, step, rows in (("train", 0, 0, 5), ("train", 0, 3, 4), ("eval", 0, 0, 3), ("eval", 7, 0, 4)):
        inputs = {m: rng.standard_normal((rows, n)).tolist() for m, n in zip(names, dims)}
        logits = model.forward(inputs, domain, mode, step)
        steps.append({"mode": mode, "domain": domain, "step": step, "inputs": inputs, "logits": logits.tolist()})
    return {"name": name, "checkpoint": ckpt, "steps": steps}


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "forward_oracle.json"
    rng = np.random.default_rng(20240611)
    cases = [
        make_case(rng, "two modalities", ["a", "b"], [3, 2], "hyperbolic", 1, 2, [-1.3, -0.7]),
        make_case(rng, "three modalities, two layers", ["a", "b", "c"], [3, 2, 4], "hyperbolic", 2, 2,
                  [-2.0, -0.5, -1.1]),
        make_case(rng, "euclidean control", ["a", "b", "c"], [3, 2, 4], "euclidean", 1, 2, [-1.0, -1.0, -1.0]),
    ]
    with open(out, "w") as f:
        json.dump({"cases": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
