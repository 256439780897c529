import logging

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion, distance_transform_edt, gaussian_filter

from helpers.erros import ArgumentoError, EntradaDegeneradaError
from models import Volume3

logger = logging.getLogger(__name__)


def distance_transform(label: Volume3) -> Volume3:
    """
    Distância euclidiana exata com sinal (mm) de uma segmentação binária.

    Interior negativo, exterior positivo. Um voxel de fundo recebe a
    distância até o centro do voxel de frente mais próximo; um voxel de
    frente recebe `-(d - s/2)`, onde `d` é a distância até o fundo mais
    próximo e `s` o menor espaçamento, de modo que o nível zero fica sobre
    a face entre os dois rótulos.

    :param label:
        Volume binário (qualquer valor não nulo é frente).

    :return:
        Volume float64 com a mesma grade.

    :raises EntradaDegeneradaError:
        Se o volume for todo frente ou todo fundo.
    """
    frente = np.asarray(label.data) != 0
    n_frente = int(frente.sum())
    if n_frente == 0 or n_frente == frente.size:
        raise EntradaDegeneradaError("degenerate label volume", code="degenerate_label")

    fora = distance_transform_edt(~frente, sampling=label.spacing)
    dentro = distance_transform_edt(frente, sampling=label.spacing)
    meio_voxel = 0.5 * min(label.spacing)

    sdf = np.where(frente, -(dentro - meio_voxel), fora).astype(np.float64)
    logger.debug("sdf dims=%s min=%.4f max=%.4f", label.dims, sdf.min(), sdf.max())
    return label.with_data(sdf)


def gaussian_smooth(vol: Volume3, sigma_mm: float) -> Volume3:
    """
    Suavização gaussiana separável, kernel truncado em 4 sigma.

    Nas bordas o resultado e renormalizado pela massa do kernel que cai
    dentro da grade, então volumes constantes não mudam.
    """
    if sigma_mm < 0 or not np.isfinite(sigma_mm):
        raise ArgumentoError(f"sigma deve ser >= 0, recebido {sigma_mm}")
    if sigma_mm == 0:
        return vol

    sigma_vox = tuple(sigma_mm / s for s in vol.spacing)
    data = np.asarray(vol.data, dtype=np.float64)
    numerador = gaussian_filter(data, sigma_vox, mode="constant", cval=0.0, truncate=4.0)
    massa = gaussian_filter(np.ones_like(data), sigma_vox, mode="constant", cval=0.0, truncate=4.0)
    return vol.with_data(numerador / massa)


def trilinear_weights(dims, spacing, origin, pontos):
    """
    Índices planos, pesos e derivadas dos pesos da interpolação trilinear.

    Pontos fora da grade são presos à borda e a derivada ao longo do eixo
    preso é zero. Os índices são da grade achatada em ordem C.

    :return:
        `(índices (n, 8), pesos (n, 8), dpesos (n, 8, 3))`, com `dpesos` já
        em unidades de mundo (por mm).
    """
    pontos = np.atleast_2d(np.asarray(pontos, dtype=np.float64))
    u = (pontos - np.asarray(origin, dtype=np.float64)) / np.asarray(spacing, dtype=np.float64)

    baixo, alto, frac, ativo = [], [], [], []
    for eixo in range(3):
        n = int(dims[eixo])
        ue = u[:, eixo]
        if n == 1:
            i0 = np.zeros(len(ue), dtype=np.int64)
            baixo.append(i0)
            alto.append(i0)
            frac.append(np.zeros(len(ue)))
            ativo.append(np.zeros(len(ue), dtype=bool))
            continue
        preso = np.clip(ue, 0.0, n - 1)
        i0 = np.clip(np.floor(preso).astype(np.int64), 0, n - 2)
        baixo.append(i0)
        alto.append(i0 + 1)
        frac.append(preso - i0)
        ativo.append((ue >= 0.0) & (ue <= n - 1))

    _, ny, nz = (int(d) for d in dims)
    indices = np.empty((len(pontos), 8), dtype=np.int64)
    pesos = np.empty((len(pontos), 8))
    dpesos = np.empty((len(pontos), 8, 3))
    canto = 0
    for bx in (0, 1):
        ix = alto[0] if bx else baixo[0]
        wx = frac[0] if bx else 1.0 - frac[0]
        dx = 1.0 if bx else -1.0
        for by in (0, 1):
            iy = alto[1] if by else baixo[1]
            wy = frac[1] if by else 1.0 - frac[1]
            dy = 1.0 if by else -1.0
            for bz in (0, 1):
                iz = alto[2] if bz else baixo[2]
                wz = frac[2] if bz else 1.0 - frac[2]
                dz = 1.0 if bz else -1.0
                indices[:, canto] = (ix * ny + iy) * nz + iz
                pesos[:, canto] = wx * wy * wz
                dpesos[:, canto, 0] = dx * wy * wz
                dpesos[:, canto, 1] = wx * dy * wz
                dpesos[:, canto, 2] = wx * wy * dz
                canto += 1

    escala = np.stack(ativo, axis=1) / np.asarray(spacing, dtype=np.float64)
    dpesos *= escala[:, None, :]
    return indices, pesos, dpesos


def sample_trilinear(vol: Volume3, p):
    """
    Valor e gradiente analítico do interpolante trilinear em pontos do mundo.

    :param p:
        Um ponto `(3,)` ou vários `(n, 3)` em mm.

    :return:
        `(valor, gradiente)` com formas `()`/`(3,)` para um ponto ou
        `(n,)`/`(n, 3)` para vários.
    """
    p = np.asarray(p, dtype=np.float64)
    unico = p.ndim == 1
    indices, pesos, dpesos = trilinear_weights(vol.dims, vol.spacing, vol.origin, p)
    plano = np.asarray(vol.data, dtype=np.float64).reshape(-1)
    amostras = plano[indices]
    valor = np.einsum("nc,nc->n", pesos, amostras)
    gradiente = np.einsum("ncd,nc->nd", dpesos, amostras)
    if unico:
        return float(valor[0]), gradiente[0]
    return valor, gradiente


def morph_close(label: Volume3, radius_vox: int) -> Volume3:
    """
    Fechamento morfológico com elemento cúbico de meia largura `radius_vox`.

    Na dilatação vizinhos fora da grade contam como fundo; na erosão são
    ignorados, de modo que o fechamento nunca remove voxels.
    """
    if radius_vox < 0:
        raise ArgumentoError(f"raio deve ser >= 0, recebido {radius_vox}")
    frente = np.asarray(label.data) != 0
    if radius_vox == 0:
        return label.with_data(frente.astype(np.uint8))

    elemento = np.ones((2 * radius_vox + 1,) * 3, dtype=bool)
    dilatado = binary_dilation(frente, structure=elemento, border_value=0)
    fechado = binary_erosion(dilatado, structure=elemento, border_value=1)
    logger.debug(
        "fechamento raio=%d adicionados=%d", radius_vox, int(fechado.sum() - frente.sum())
    )
    return label.with_data(fechado.astype(np.uint8))
