import numpy as np
import pytest
import yaml

from smibdse.config import config_from_dict, preset_dict


def closed_form_kf(a, c, q, r, x0, p0, ys):
    """Textbook Kalman filter; row 0 is the prior, updates start at k = 1."""
    means, covs = [x0], [p0]
    x, p = x0, p0
    for y in ys[1:]:
        x = a @ x
        p = a @ p @ a.T + q
        s = c @ p @ c.T + r
        k = p @ c.T @ np.linalg.inv(s)
        x = x + k @ (y - c @ x)
        p = (np.eye(len(x)) - k @ c) @ p
        means.append(x)
        covs.append(p)
    return np.array(means), np.array(covs)


def random_linear_system(seed, n=4, p=1, steps=100):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    a *= 0.9 / max(abs(np.linalg.eigvals(a)))
    c = rng.standard_normal((p, n))
    lq = rng.standard_normal((n, n)) * 0.1
    q = lq @ lq.T + 0.01 * np.eye(n)
    r = np.diag(rng.uniform(0.05, 0.2, p))
    x = rng.standard_normal(n)
    ys = []
    for _ in range(steps + 1):
        ys.append(c @ x + rng.multivariate_normal(np.zeros(p), r))
        x = a @ x + rng.multivariate_normal(np.zeros(n), q)
    return a, c, q, r, np.array(ys)


@pytest.fixture
def short_config_dict():
    """Scenario-1 settings cut to 0.5 s so end-to-end tests stay quick."""
    raw = preset_dict("scenario1")
    raw["horizon"] = 0.5
    raw["monte_carlo"] = {"runs": 2}
    return raw


@pytest.fixture
def short_config(short_config_dict):
    return config_from_dict(short_config_dict)


@pytest.fixture
def write_config(tmp_path):
    def _write(raw, name="cfg.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw))
        return path
    return _write
