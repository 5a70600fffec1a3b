"""Independent oracles used to freeze expected values in the C++ tests.

Run with: python3 tests/oracles/oracles.py
"""
import math
import numpy as np
from scipy import stats


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def standardized_sigmoid(z):
    z = np.asarray(z, dtype=float)
    sd = z.std()  # population std
    if sd == 0:
        return [0.5] * len(z)
    return [sigmoid(v) for v in (z - z.mean()) / sd]


def three_doc_example():
    docs = [[1, 1, 2], [2, 3], [3]]
    V = 4
    n = len(docs)
    f = [sum(1 for d in docs if t in d) for t in range(V)]
    z = [math.log((n + 1) / (ft + 1)) for ft in f]
    print("f", f)
    print("z", [repr(v) for v in z])
    print("p_base(vocab)", [repr(v) for v in standardized_sigmoid(z)])
    seq = [1, 1, 2]
    print("p_base(seq [1,1,2])", [repr(v) for v in standardized_sigmoid([z[t] for t in seq])])


def z012():
    print("p_base [0,1,2]", [repr(v) for v in standardized_sigmoid([0, 1, 2])])


def tiny_forward():
    E = np.array([[1, 0], [0, 1], [1, 1], [0.5, -0.5]], dtype=float)
    W = np.array([[1, -1, 0.5], [0, 2, -1]], dtype=float)
    b = np.array([0.1, 0, -0.1])
    distorted = [0, 2]
    masked = [3, 1]
    cond = E[distorted]
    g = cond.mean(axis=0)
    for t in range(2):
        h = E[masked[t]] + cond[t] + g
        logits = W.T @ h + b
        p = np.exp(logits - logits.max())
        p /= p.sum()
        print("tiny forward t=%d" % t, [repr(v) for v in p])


def chi2_critical():
    print("chi2.ppf(0.9999, 63) =", repr(stats.chi2.ppf(0.9999, 63)))


def corrector_tiny():
    # V=3, D=1, r=1 window scorer; embedding E (3x1), w (3), bias b
    E = np.array([[0.5], [-1.0], [2.0]])
    w = np.array([0.3, 1.0, -0.4])
    b = -0.2
    seq = [2, 0, 1]
    out = []
    for t in range(3):
        logit = b
        for k, off in enumerate((-1, 0, 1)):
            s = t + off
            if 0 <= s < 3:
                logit += w[k] * E[seq[s]][0]
        out.append(sigmoid(logit))
    print("corrector suspicion", [repr(v) for v in out])


if __name__ == "__main__":
    three_doc_example()
    z012()
    tiny_forward()
    chi2_critical()
    corrector_tiny()
