import numpy as np
import pytest

from irlsnet.nncore import IDENTITY, LEAKY_RELU, SOFTPLUS, DenseNet


def random_net(rng, n_layers=None, max_width=16, in_dim=None, out_dim=1):
    """Random small net: 1-3 layers, widths <= max_width, random activations."""
    n_layers = n_layers or int(rng.integers(1, 4))
    sizes = [in_dim or int(rng.integers(1, max_width + 1))]
    sizes += [int(rng.integers(1, max_width + 1)) for _ in range(n_layers - 1)]
    sizes.append(out_dim)
    acts = [(IDENTITY, LEAKY_RELU, SOFTPLUS)[int(rng.integers(0, 3))] for _ in range(n_layers)]
    net = DenseNet.build(sizes, acts, rng)
    for layer in net.layers:
        layer.bias[:] = rng.normal(0.0, 0.5, layer.bias.shape)
    return net


def numeric_grads(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar ``loss_fn()`` w.r.t. every entry of ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_error(a, b):
    a, b = np.concatenate([x.ravel() for x in a]), np.concatenate([x.ravel() for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_acceptance(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
