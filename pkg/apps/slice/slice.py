import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import typer  # noqa: E402
from skimage.draw import line  # noqa: E402
from trimesh.intersections import mesh_plane  # noqa: E402

from core.fileio import read_mesh, read_volume  # noqa: E402
from helpers.cli import ecoar_config, executar, preparar  # noqa: E402
from helpers.erros import ArgumentoError  # noqa: E402
from models import TriMesh, Volume3  # noqa: E402

logger = logging.getLogger(__name__)

_EIXOS = {"x": 0, "y": 1, "z": 2}
_NIVEIS = (255, 0, 128, 192, 64)


def render_slice(vol: Volume3, eixo: int, indice: int, malhas: list[TriMesh]) -> np.ndarray:
    """
    Fatia do volume em tons de cinza (uint8) com as interseções das malhas
    com o plano da fatia desenhadas em níveis de cinza distintos.

    Linhas da imagem seguem o primeiro eixo restante, colunas o segundo.
    """
    if not 0 <= indice < vol.dims[eixo]:
        raise ArgumentoError(
            f"índice {indice} fora do intervalo [0, {vol.dims[eixo] - 1}] no eixo {eixo}"
        )
    fatia = np.take(np.asarray(vol.data, dtype=np.float64), indice, axis=eixo)
    minimo, maximo = float(fatia.min()), float(fatia.max())
    if maximo > minimo:
        imagem = np.round(200.0 * (fatia - minimo) / (maximo - minimo)).astype(np.uint8)
    else:
        imagem = np.zeros(fatia.shape, dtype=np.uint8)

    restantes = [k for k in range(3) if k != eixo]
    normal = np.zeros(3)
    normal[eixo] = 1.0
    origem_plano = np.asarray(vol.voxel_to_world([indice if k == eixo else 0 for k in range(3)]))
    for numero, malha in enumerate(malhas):
        segmentos = mesh_plane(malha.to_trimesh(), normal, origem_plano)
        if len(segmentos) == 0:
            continue
        voxels = np.rint(vol.world_to_voxel(np.asarray(segmentos).reshape(-1, 3))).astype(np.int64)
        voxels = voxels[:, restantes].reshape(-1, 2, 2)
        nivel = _NIVEIS[numero % len(_NIVEIS)]
        for (l0, c0), (l1, c1) in voxels:
            linhas, colunas = line(int(l0), int(c0), int(l1), int(c1))
            dentro = (
                (linhas >= 0) & (linhas < imagem.shape[0]) & (colunas >= 0) & (colunas < imagem.shape[1])
            )
            imagem[linhas[dentro], colunas[dentro]] = nivel
    return imagem


def write_image(imagem: np.ndarray, path: Path):
    """Grava PGM binário (P5) ou PNG conforme a extensão."""
    path.parent.mkdir(parents=True, exist_ok=True)
    sufixo = path.suffix.lower()
    if sufixo == ".pgm":
        cabecalho = f"P5\n{imagem.shape[1]} {imagem.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(cabecalho + np.ascontiguousarray(imagem, dtype=np.uint8).tobytes())
    elif sufixo == ".png":
        plt.imsave(path, imagem, cmap="gray", vmin=0, vmax=255, metadata={"Software": None})
    else:
        raise ArgumentoError(f"formato de imagem desconhecido: {path} (use .pgm ou .png)")
    return path


@executar
def cmd_slice(
    vol: Path = typer.Option(..., "--vol"),
    mesh: list[Path] = typer.Option([], "--mesh", help="Pode ser repetido."),
    axis: str = typer.Option("z", "--axis", help="x, y ou z."),
    index: Optional[int] = typer.Option(None, "--index", help="Padrão: fatia central."),
    out: Path = typer.Option(..., "--out", help="Imagem .pgm ou .png."),
    config: Optional[Path] = typer.Option(None, "--config"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Renderiza uma fatia do volume com os contornos das malhas sobrepostos."""
    run = preparar(config, log_level)
    if axis not in _EIXOS:
        raise ArgumentoError(f"--axis deve ser x, y ou z, recebido {axis}")
    volume = read_volume(vol)
    eixo = _EIXOS[axis]
    indice = volume.dims[eixo] // 2 if index is None else index
    imagem = render_slice(volume, eixo, indice, [read_mesh(m) for m in mesh])
    write_image(imagem, out)
    ecoar_config(run, out)
    logger.info("fatia %s=%d gravada em %s", axis, indice, out)
