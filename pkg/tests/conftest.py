import numpy as np
import pytest
import trimesh

from helpers.settings import set_workers
from models import TriMesh, Volume3
from schemas import FitConfig, IntegratorConfig, LossConfig, PhantomSpec


@pytest.fixture(autouse=True)
def _uma_thread():
    set_workers(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def icosfera(subdivisions: int = 3, radius: float = 1.0, centro=(0.0, 0.0, 0.0)) -> TriMesh:
    esfera = trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius)
    return TriMesh(np.asarray(esfera.vertices) + np.asarray(centro), np.asarray(esfera.faces))


def bola(n: int = 32, raio: float = 10.0, spacing: float = 1.0) -> Volume3:
    """Rótulo binário de uma bola centrada na grade."""
    origem = -(n - 1) / 2.0 * spacing
    eixo = origem + np.arange(n) * spacing
    xx, yy, zz = np.meshgrid(eixo, eixo, eixo, indexing="ij")
    dentro = np.sqrt(xx**2 + yy**2 + zz**2) < raio
    return Volume3(dentro.astype(np.uint8), (spacing,) * 3, (origem,) * 3)


def tetraedro_regular() -> TriMesh:
    vertices = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, np.sqrt(3.0) / 2.0, 0.0],
            [0.5, np.sqrt(3.0) / 6.0, np.sqrt(2.0 / 3.0)],
        ]
    )
    faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    return TriMesh(vertices, faces)


def placa_plana(n: int = 4, z: float = 0.0) -> TriMesh:
    """Malha plana n x n no plano z, faces orientadas para +z."""
    eixo = np.linspace(0.0, 1.0, n)
    xx, yy = np.meshgrid(eixo, eixo, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel(), np.full(n * n, z)], axis=1)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b = i * n + j, (i + 1) * n + j
            c, d = (i + 1) * n + j + 1, i * n + j + 1
            faces += [[a, b, c], [a, c, d]]
    return TriMesh(vertices, np.array(faces))


@pytest.fixture
def esfera():
    return icosfera(3, 10.0)


@pytest.fixture
def fantoma_pequeno() -> PhantomSpec:
    return PhantomSpec(
        grid_dims=(48, 48, 48),
        spacing=1.0,
        r0=14.0,
        fold_amp=3.0,
        fold_freq=3,
        thickness=2.0,
        pve_close_radius=1,
        subdivisions=3,
    )


@pytest.fixture
def fit_rapido() -> FitConfig:
    return FitConfig(
        iters=8,
        lr=1e-4,
        integrator=IntegratorConfig(T=1.0, K=5),
        losses=LossConfig(pretrain_iters=3),
        R=2,
        M=1,
        level_factors=[1, 2],
        grid_spacing=2.0,
        grid_margin_mm=4.0,
    )
