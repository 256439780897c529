from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import trimesh

from helpers.erros import ArgumentoError, ContratoError


@dataclass(frozen=True, eq=False)
class Volume3:
    """
    Grade 3D escalar ou de rótulos com espaçamento e origem em mm.

    `data[i, j, k]` é o valor no centro do voxel (i, j, k), cuja posição no
    mundo e `origin + (i, j, k) * spacing`.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ArgumentoError(f"volume precisa ser 3D não vazio, recebido shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ArgumentoError("spacing e origin precisam de 3 componentes")
        if any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ArgumentoError(f"spacing deve ser estritamente positivo: {spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def affine(self) -> np.ndarray:
        afim = np.diag([*self.spacing, 1.0])
        afim[:3, 3] = self.origin
        return afim

    def voxel_to_world(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.float64)
        return np.asarray(self.origin) + ijk * np.asarray(self.spacing)

    def world_to_voxel(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return (p - np.asarray(self.origin)) / np.asarray(self.spacing)

    def with_data(self, data) -> "Volume3":
        return Volume3(np.asarray(data), self.spacing, self.origin)

    def is_binary(self) -> bool:
        valores = np.unique(self.data)
        return bool(np.all(np.isin(valores, (0, 1))))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Malha triangular indexada (vértices em mm, faces como triplas de índices).

    As arestas são derivadas das faces e ficam em cache.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise ArgumentoError("índice de face fora do intervalo de vértices")
            degeneradas = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 2] == faces[:, 0])
            )
            if degeneradas.any():
                raise ArgumentoError(f"{int(degeneradas.sum())} faces degeneradas (índices repetidos)")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def directed_edges(self) -> np.ndarray:
        return self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)

    @cached_property
    def edges(self) -> np.ndarray:
        if not self.faces.size:
            return np.zeros((0, 2), dtype=np.int64)
        return np.unique(np.sort(self.directed_edges, axis=1), axis=0)

    @cached_property
    def edge_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Pares de faces adjacentes por aresta interior.

        Retorna `(edges, pares)` onde `pares[e] = (f0, f1)` para cada aresta
        com exatamente duas faces incidentes.
        """
        ordenadas = np.sort(self.directed_edges, axis=1)
        unicas, inverso, contagem = np.unique(
            ordenadas, axis=0, return_inverse=True, return_counts=True
        )
        inverso = inverso.reshape(-1)
        face_de = np.repeat(np.arange(self.n_faces), 3)
        ordem = np.argsort(inverso, kind="stable")
        inicio = np.concatenate([[0], np.cumsum(contagem)[:-1]])
        interiores = np.flatnonzero(contagem == 2)
        f0 = face_de[ordem[inicio[interiores]]]
        f1 = face_de[ordem[inicio[interiores] + 1]]
        return unicas[interiores], np.stack([f0, f1], axis=1)

    @property
    def euler_characteristic(self) -> int:
        return int(self.n_vertices - len(self.edges) + self.n_faces)

    def is_watertight(self) -> bool:
        """Cada aresta com exatamente duas faces, de orientações opostas."""
        if not self.faces.size:
            return False
        dirigidas = self.directed_edges
        _, contagem = np.unique(np.sort(dirigidas, axis=1), axis=0, return_counts=True)
        if np.any(contagem != 2):
            return False
        _, repetidas = np.unique(dirigidas, axis=0, return_counts=True)
        return bool(np.all(repetidas == 1))

    def face_normals(self, *, unit: bool = True) -> np.ndarray:
        tri = self.vertices[self.faces]
        normais = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if unit:
            norma = np.linalg.norm(normais, axis=1, keepdims=True)
            normais = normais / np.where(norma > 0, norma, 1.0)
        return normais

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def signed_volume(self) -> float:
        """Volume envolvido pelo teorema da divergência (positivo se orientada para fora)."""
        tri = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    def with_vertices(self, vertices) -> "TriMesh":
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ContratoError(
                f"número de vértices incompatível: {vertices.shape[0]} != {self.n_vertices}"
            )
        novo = TriMesh.__new__(TriMesh)
        object.__setattr__(novo, "vertices", np.ascontiguousarray(vertices))
        object.__setattr__(novo, "faces", self.faces)
        return novo

    def flipped(self) -> "TriMesh":
        return TriMesh(self.vertices, self.faces[:, ::-1])

    def same_connectivity(self, other: "TriMesh") -> bool:
        return self.n_vertices == other.n_vertices and np.array_equal(self.faces, other.faces)

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, process=False)

    @classmethod
    def from_trimesh(cls, malha: trimesh.Trimesh) -> "TriMesh":
        return cls(np.asarray(malha.vertices), np.asarray(malha.faces))


@dataclass
class VelocityGrid:
    """Campo de velocidade estacionário amostrado em uma grade regular (mm por unidade de tempo)."""

    values: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.values.shape[:3])


@dataclass
class DeformModel:
    """
    Parâmetros da deformação: R x M campos estacionários e a atenção temporal.

    `svf_grids` segue a ordem nível-maior (nível 0 primeiro, M campos por
    nível). `attn_params[i] = (a, b, c)` define o logit `a + b t + c t^2` do
    campo i.
    """

    svf_grids: list[VelocityGrid]
    attn_params: np.ndarray
    R: int
    M: int
    level_factors: tuple[int, ...] = field(default=(1, 2, 4))

    def __post_init__(self):
        if self.R * self.M < 1:
            raise ArgumentoError("R*M precisa ser >= 1")
        if len(self.svf_grids) != self.R * self.M:
            raise ArgumentoError(
                f"esperados {self.R * self.M} campos, recebidos {len(self.svf_grids)}"
            )
        self.attn_params = np.asarray(self.attn_params, dtype=np.float64).reshape(self.R * self.M, 3)

    @property
    def n_fields(self) -> int:
        return self.R * self.M

    @property
    def finest_spacing(self) -> float:
        return float(min(min(g.spacing) for g in self.svf_grids))

    @classmethod
    def zeros(
        cls,
        *,
        origin,
        extent_mm,
        spacing: float = 1.0,
        R: int = 3,
        M: int = 2,
        level_factors=(1, 2, 4),
    ) -> "DeformModel":
        """
        Modelo identidade (todas as grades e logits nulos).

        Cada nível r usa espaçamento `spacing * level_factors[r]` e cobre pelo
        menos a caixa `[origin, origin + extent_mm]`.
        """
        level_factors = tuple(int(f) for f in level_factors)
        if len(level_factors) < R:
            raise ArgumentoError(f"level_factors precisa de {R} entradas, recebido {level_factors}")
        if spacing <= 0:
            raise ArgumentoError("spacing da grade deve ser positivo")
        origin = tuple(float(o) for o in origin)
        extent = np.asarray(extent_mm, dtype=np.float64)
        grids = []
        for r in range(R):
            passo = spacing * level_factors[r]
            dims = np.maximum(np.ceil(extent / passo - 1e-9).astype(int) + 1, 2)
            for _ in range(M):
                grids.append(
                    VelocityGrid(
                        values=np.zeros((*dims, 3), dtype=np.float64),
                        spacing=(passo, passo, passo),
                        origin=origin,
                    )
                )
        return cls(
            svf_grids=grids,
            attn_params=np.zeros((R * M, 3)),
            R=R,
            M=M,
            level_factors=level_factors[:R],
        )

    def copy(self) -> "DeformModel":
        return DeformModel(
            svf_grids=[VelocityGrid(g.values.copy(), g.spacing, g.origin) for g in self.svf_grids],
            attn_params=self.attn_params.copy(),
            R=self.R,
            M=self.M,
            level_factors=self.level_factors,
        )
