import logging

import numpy as np
import trimesh

from core.mesh import count_self_intersections, laplacian_smooth, point_surface_distance
from helpers.erros import ContratoError, EntradaDegeneradaError
from models import TriMesh
from schemas import MetricBlock

logger = logging.getLogger(__name__)


def _amostrar(malha: TriMesh, n_samples: int, seed: int) -> np.ndarray:
    if malha.n_faces == 0 or malha.face_areas().sum() <= 0:
        raise EntradaDegeneradaError("malha degenerada (área nula)", code="degenerate_mesh")
    pontos, _ = trimesh.sample.sample_surface(malha.to_trimesh(), int(n_samples), seed=seed)
    return np.asarray(pontos, dtype=np.float64)


def surface_distances(a: TriMesh, b: TriMesh, n_samples: int = 10000, seed: int = 0):
    """
    Distâncias ponto-superfície nos dois sentidos, com amostras uniformes em
    área geradas com a mesma semente em cada malha.

    :return:
        `(distâncias a->b, distâncias b->a)`.
    """
    if n_samples < 1:
        raise EntradaDegeneradaError("n_samples deve ser >= 1", code="bad_samples")
    ida, _, _ = point_surface_distance(_amostrar(a, n_samples, seed), b)
    volta, _, _ = point_surface_distance(_amostrar(b, n_samples, seed), a)
    return ida, volta


def assd(a: TriMesh, b: TriMesh, n_samples: int = 10000, seed: int = 0) -> float:
    ida, volta = surface_distances(a, b, n_samples, seed)
    return 0.5 * (float(ida.mean()) + float(volta.mean()))


def hd90(a: TriMesh, b: TriMesh, n_samples: int = 10000, seed: int = 0) -> float:
    """Percentil 90 das distâncias dos dois sentidos juntas."""
    ida, volta = surface_distances(a, b, n_samples, seed)
    return float(np.percentile(np.concatenate([ida, volta]), 90))


def _mesma_conectividade(a: TriMesh, b: TriMesh):
    if not a.same_connectivity(b):
        raise ContratoError(
            f"malhas com conectividade diferente (V={a.n_vertices}/{b.n_vertices}, "
            f"F={a.n_faces}/{b.n_faces})",
            code="connectivity_mismatch",
        )


def cortical_thickness(white: TriMesh, pial: TriMesh):
    """Espessura vértice a vértice `|v_pial - v_white|`; retorna `(mapa, média)`."""
    _mesma_conectividade(white, pial)
    espessura = np.linalg.norm(pial.vertices - white.vertices, axis=1)
    return espessura, float(espessura.mean())


def thickness_error(a, b) -> float:
    """Erro L1 médio entre dois mapas por vértice."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContratoError(f"mapas com tamanhos diferentes: {a.shape} != {b.shape}", code="vertex_mismatch")
    return float(np.abs(a - b).mean())


def midthickness(white: TriMesh, pial: TriMesh) -> TriMesh:
    _mesma_conectividade(white, pial)
    return white.with_vertices(0.5 * (white.vertices + pial.vertices))


def sulcal_reference(mid: TriMesh, smooth_iters: int = 200, lam: float = 0.5) -> TriMesh:
    """
    Copia fortemente suavizada de `mid`, reescalada em torno do centroide
    para recuperar o volume envolvido original.
    """
    suave = laplacian_smooth(mid, smooth_iters, lam)
    volume_original = abs(mid.signed_volume())
    volume_suave = abs(suave.signed_volume())
    if volume_suave <= 0 or volume_original <= 0:
        return suave
    centro = suave.vertices.mean(axis=0)
    escala = (volume_original / volume_suave) ** (1.0 / 3.0)
    return suave.with_vertices(centro + escala * (suave.vertices - centro))


def sulcal_depth(mid: TriMesh, smooth_iters: int = 200):
    """
    Profundidade sulcal aproximada: distância de cada vértice até a
    referência suavizada, positiva para vértices dentro dela.

    :return:
        `(profundidade por vértice, média)`.
    """
    referencia = sulcal_reference(mid, smooth_iters)
    distancia, perto, face = point_surface_distance(mid.vertices, referencia)
    normais = referencia.face_normals()
    if referencia.signed_volume() < 0:
        normais = -normais
    lado = np.einsum("ij,ij->i", mid.vertices - perto, normais[face])
    profundidade = np.where(lado < 0, distancia, -distancia)
    return profundidade, float(profundidade.mean())


def sulcal_depth_error(mid_a: TriMesh, mid_b: TriMesh, smooth_iters: int = 200) -> float:
    _mesma_conectividade(mid_a, mid_b)
    prof_a, _ = sulcal_depth(mid_a, smooth_iters)
    prof_b, _ = sulcal_depth(mid_b, smooth_iters)
    return thickness_error(prof_a, prof_b)


def evaluate(
    pred: TriMesh,
    ref: TriMesh,
    *,
    n_samples: int = 10000,
    seed: int = 0,
    white_pred: TriMesh | None = None,
    white_ref: TriMesh | None = None,
    smooth_iters: int = 200,
) -> MetricBlock:
    """
    Bloco completo de métricas de `pred` contra `ref`.

    Com `white_pred` (e opcionalmente `white_ref`, que assume `white_pred`
    quando omitida) `pred`/`ref` são tratadas como superfícies piais e os
    erros de espessura e profundidade sulcal também são calculados.
    """
    ida, volta = surface_distances(pred, ref, n_samples, seed)
    selfx = count_self_intersections(pred)
    bloco = {
        "assd_mm": 0.5 * (float(ida.mean()) + float(volta.mean())),
        "hd90_mm": float(np.percentile(np.concatenate([ida, volta]), 90)),
        "selfx_faces": selfx,
        "selfx_rate": selfx / max(pred.n_faces, 1),
    }
    if white_pred is not None:
        white_ref = white_ref if white_ref is not None else white_pred
        esp_pred, _ = cortical_thickness(white_pred, pred)
        esp_ref, _ = cortical_thickness(white_ref, ref)
        bloco["thickness_err_mm"] = thickness_error(esp_pred, esp_ref)

        meio_pred = midthickness(white_pred, pred)
        meio_ref = midthickness(white_ref, ref)
        prof_pred, media_pred = sulcal_depth(meio_pred, smooth_iters)
        prof_ref, _ = sulcal_depth(meio_ref, smooth_iters)
        bloco["sulc_err_mm"] = thickness_error(prof_pred, prof_ref)
        bloco["mean_sulcal_depth_mm"] = media_pred

    logger.debug("métricas %s", bloco)
    return MetricBlock(**bloco)
