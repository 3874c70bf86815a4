import numpy as np
import pytest

from blendsurvey.dataset import Dataset, Schema


def make_dataset(n1=150, n2=150, seed=0, shift=0.0, conv_slope=0.0, d_star=0.1, p=2):
    """Two samples over x ~ N(0, I); S2 tilted along x1 by ``conv_slope``."""
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n1, p))
    x2 = rng.standard_normal((n2, p))
    x2[:, 0] += conv_slope
    x = np.vstack([x1, x2])
    conv = np.r_[np.zeros(n1, bool), np.ones(n2, bool)]
    y = x.sum(axis=1) + rng.standard_normal(n1 + n2) + shift * conv
    names = tuple(f"x{j + 1}" for j in range(p))
    return Dataset(
        ids=[f"u{i}" for i in range(n1 + n2)],
        is_conv=conv,
        x=x,
        y=y[:, None],
        d_star=np.where(conv, np.nan, d_star),
        schema=Schema(names, ("y",)),
    )


@pytest.fixture
def toy_ds():
    return make_dataset()


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text(
        "id,sample,d_star,x1,x2,y\n"
        "a,prob,0.5,1,0,2.0\n"
        "b,prob,0.25,0,1,3.0\n"
        "c,conv,,1,1,\n"
        "d,conv,0.1,0,0,5.0\n"
    )
    return path
