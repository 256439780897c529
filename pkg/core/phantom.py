import logging
from typing import NamedTuple

import numpy as np
import trimesh
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt

from core.volume import morph_close
from helpers.erros import ArgumentoError
from helpers.logs import kv
from models import TriMesh, Volume3
from schemas import PhantomSpec

logger = logging.getLogger(__name__)

_N_THETA = 256
_N_PHI = 512
_SUPERAMOSTRAGEM = 3


class Phantom(NamedTuple):
    white_gt: TriMesh
    pial_gt: TriMesh
    wm_label: Volume3
    cgm_label: Volume3
    cgm_label_pve: Volume3


def white_radius(spec: PhantomSpec, theta, phi):
    """Raio da superfície branca `r0 + A sin(f theta) sin(f phi)` e suas derivadas parciais."""
    f = spec.fold_freq
    a = spec.fold_amp
    s_t, c_t = np.sin(f * theta), np.cos(f * theta)
    s_p, c_p = np.sin(f * phi), np.cos(f * phi)
    r = spec.r0 + a * s_t * s_p
    r_theta = a * f * c_t * s_p
    r_phi = a * f * s_t * c_p
    return r, r_theta, r_phi


def _base_esferica(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    e_rho = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return e_rho, e_theta, e_phi


def white_normals(spec: PhantomSpec, theta, phi) -> np.ndarray:
    """Normal unitária externa do gráfico radial."""
    r, r_theta, r_phi = white_radius(spec, theta, phi)
    e_rho, e_theta, e_phi = _base_esferica(theta, phi)
    seno = np.maximum(np.sin(theta), 1e-12)
    normal = e_rho - (r_theta / r)[..., None] * e_theta - (r_phi / (r * seno))[..., None] * e_phi
    return normal / np.linalg.norm(normal, axis=-1, keepdims=True)


def _angulos(pontos):
    pontos = np.asarray(pontos, dtype=np.float64)
    rho = np.linalg.norm(pontos, axis=-1)
    z = np.divide(pontos[..., 2], rho, out=np.ones_like(rho), where=rho > 0)
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(np.arctan2(pontos[..., 1], pontos[..., 0]), 2.0 * np.pi)
    return rho, theta, phi


def pial_radius_table(spec: PhantomSpec):
    """
    Raio da envoltória externa da superfície branca deslocada de `thickness`
    ao longo da normal, tabelado em (theta, phi) e interpolado.

    Onde a superfície deslocada se sobrepõe (sulcos estreitos) vale o maior
    raio de cada célula.
    """
    n_t, n_p = _N_THETA * _SUPERAMOSTRAGEM, _N_PHI * _SUPERAMOSTRAGEM
    theta = (np.arange(n_t) + 0.5) * np.pi / n_t
    phi = (np.arange(n_p) + 0.5) * 2.0 * np.pi / n_p
    tt, pp = np.meshgrid(theta, phi, indexing="ij")

    r, _, _ = white_radius(spec, tt, pp)
    e_rho, _, _ = _base_esferica(tt, pp)
    deslocados = r[..., None] * e_rho + spec.thickness * white_normals(spec, tt, pp)
    rho, th, ph = _angulos(deslocados.reshape(-1, 3))

    i = np.clip((th / np.pi * _N_THETA).astype(np.int64), 0, _N_THETA - 1)
    j = np.clip((ph / (2.0 * np.pi) * _N_PHI).astype(np.int64), 0, _N_PHI - 1)
    tabela = np.full((_N_THETA, _N_PHI), -np.inf)
    np.maximum.at(tabela, (i, j), rho)

    vazias = ~np.isfinite(tabela)
    if vazias.any():
        _, (ii, jj) = distance_transform_edt(vazias, return_indices=True)
        tabela = tabela[ii, jj]
        logger.debug("envoltória pial %s", kv(celulas_vazias=int(vazias.sum())))

    centros_t = (np.arange(_N_THETA) + 0.5) * np.pi / _N_THETA
    centros_p = (np.arange(_N_PHI) + 0.5) * 2.0 * np.pi / _N_PHI
    passo_p = 2.0 * np.pi / _N_PHI
    eixo_p = np.concatenate([[centros_p[0] - passo_p], centros_p, [centros_p[-1] + passo_p]])
    estendida = np.concatenate([tabela[:, -1:], tabela, tabela[:, :1]], axis=1)
    interpolador = RegularGridInterpolator((centros_t, eixo_p), estendida, method="linear")

    def raio(theta_q, phi_q):
        theta_q = np.clip(np.asarray(theta_q, dtype=np.float64), centros_t[0], centros_t[-1])
        phi_q = np.clip(np.mod(phi_q, 2.0 * np.pi), eixo_p[0], eixo_p[-1])
        consulta = np.stack(np.broadcast_arrays(theta_q, phi_q), axis=-1)
        return interpolador(consulta.reshape(-1, 2)).reshape(consulta.shape[:-1])

    return raio


def check_spec(spec: PhantomSpec):
    """
    Valida a geometria do fantoma.

    :raises ArgumentoError:
        Se o raio branco puder ser não positivo ou o fantoma não couber na grade.
    """
    if spec.r0 - spec.fold_amp <= 0:
        raise ArgumentoError(
            f"superfície branca não estrelada: r0 - fold_amp = {spec.r0 - spec.fold_amp} <= 0",
            code="not_star_convex",
        )
    inclinacao = spec.fold_amp * spec.fold_freq / spec.r0
    if inclinacao >= 1:
        logger.warning("dobras íngremes %s", kv(inclinacao=inclinacao))
    meia_extensao = min((n - 1) / 2.0 * spec.spacing for n in spec.grid_dims)
    if spec.r0 + spec.fold_amp + spec.thickness + spec.spacing > meia_extensao:
        raise ArgumentoError(
            f"fantoma não cabe na grade (raio externo {spec.r0 + spec.fold_amp + spec.thickness} mm, "
            f"meia extensão {meia_extensao} mm)",
            code="phantom_outside_grid",
        )


def generate(spec: PhantomSpec) -> Phantom:
    """
    Gera o fantoma de esfera dobrada.

    As malhas de referência compartilham a conectividade de uma icosfera;
    os rótulos são amostrados nos centros dos voxels.
    """
    check_spec(spec)
    raio_pial = pial_radius_table(spec)

    esfera = trimesh.creation.icosphere(subdivisions=spec.subdivisions, radius=1.0)
    direcoes = np.asarray(esfera.vertices, dtype=np.float64)
    direcoes /= np.linalg.norm(direcoes, axis=1, keepdims=True)
    faces = np.asarray(esfera.faces, dtype=np.int64)
    _, theta, phi = _angulos(direcoes)
    r_w, _, _ = white_radius(spec, theta, phi)
    r_p = np.maximum(raio_pial(theta, phi), r_w)
    white = TriMesh(direcoes * r_w[:, None], faces)
    pial = TriMesh(direcoes * r_p[:, None], faces)

    espacamento = (spec.spacing,) * 3
    origem = tuple(-(n - 1) / 2.0 * spec.spacing for n in spec.grid_dims)
    eixos = [origem[k] + np.arange(spec.grid_dims[k]) * spec.spacing for k in range(3)]
    xx, yy, zz = np.meshgrid(*eixos, indexing="ij")
    rho, theta_v, phi_v = _angulos(np.stack([xx, yy, zz], axis=-1))
    r_wv, _, _ = white_radius(spec, theta_v, phi_v)
    r_pv = np.maximum(raio_pial(theta_v, phi_v), r_wv)

    wm = rho < r_wv
    cgm = (rho < r_pv) & ~wm
    wm_label = Volume3(wm.astype(np.uint8), espacamento, origem)
    cgm_label = Volume3(cgm.astype(np.uint8), espacamento, origem)
    fechado = np.asarray(morph_close(cgm_label, spec.pve_close_radius).data) != 0
    cgm_pve = Volume3((fechado & ~wm).astype(np.uint8), espacamento, origem)

    logger.info(
        "fantoma gerado %s",
        kv(
            dims="x".join(str(n) for n in spec.grid_dims),
            wm=int(wm.sum()),
            cgm=int(cgm.sum()),
            pve_extra=int(cgm_pve.data.sum() - cgm.sum()),
            V=white.n_vertices,
        ),
    )
    return Phantom(white, pial, wm_label, cgm_label, cgm_pve)
