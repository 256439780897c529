import gzip
import io
import json
import logging
import struct
from pathlib import Path

import nibabel as nib
import numpy as np
import trimesh
from plyfile import PlyData, PlyElement
from pydantic import ValidationError
from trimesh.exchange.obj import export_obj

from helpers.erros import ArgumentoError, ArquivoError
from helpers.validacao import verificar_campos_obrigatorios
from models import DeformModel, TriMesh, VelocityGrid, Volume3
from schemas import VolumeHeader

logger = logging.getLogger(__name__)

_NIFTI_DTYPES = (np.dtype(np.uint8), np.dtype(np.int16), np.dtype(np.float32))
_RAW_DTYPES = {"u8": "<u1", "i16": "<i2", "f32": "<f4", "f64": "<f8"}
_MAGIA_MODELO = b"COSG"
_VERSAO_MODELO = 1


def _exigir_arquivo(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise ArquivoError(f"arquivo não encontrado: {path}", code="missing_file")
    if path.stat().st_size == 0:
        raise ArquivoError(f"arquivo vazio: {path}", code="empty_file")
    return path


def _ler_cabecalho_nifti(path: Path) -> nib.Nifti1Header:
    abrir = gzip.open if path.suffix == ".gz" else open
    try:
        with abrir(path, "rb") as arquivo:
            bruto = arquivo.read(352)
    except OSError as exc:
        raise ArquivoError(f"falha ao ler {path}: {exc}", code="truncated_data") from exc
    if len(bruto) < 348:
        raise ArquivoError(f"cabeçalho NIfTI truncado em {path}", code="truncated_data")

    tamanho_le = struct.unpack("<i", bruto[:4])[0]
    tamanho_be = struct.unpack(">i", bruto[:4])[0]
    if 348 not in (tamanho_le, tamanho_be):
        raise ArquivoError(f"sizeof_hdr diferente de 348 em {path}", code="bad_header")
    if bruto[344:348] != b"n+1\x00":
        raise ArquivoError(f"magic NIfTI-1 de arquivo único ausente em {path}", code="bad_magic")
    return nib.Nifti1Header.from_fileobj(io.BytesIO(bruto), check=False)


def read_nifti(path) -> Volume3:
    """
    Lê um volume NIfTI-1 de arquivo único (`.nii` ou `.nii.gz`).

    Espaçamento vem de `pixdim`; a origem da `sform` quando `sform_code > 0`,
    senão dos campos `qoffset`. Apenas orientações alinhadas aos eixos
    (diagonal positiva) são aceitas.

    :raises ArquivoError:
        Com códigos `bad_magic`, `bad_header`, `unsupported_dtype`,
        `unsupported_orientation` ou `truncated_data`.
    """
    path = _exigir_arquivo(path)
    cabecalho = _ler_cabecalho_nifti(path)

    dtype = cabecalho.get_data_dtype()
    if dtype.newbyteorder("=") not in _NIFTI_DTYPES:
        raise ArquivoError(f"tipo de dado NIfTI não suportado: {dtype}", code="unsupported_dtype")

    try:
        imagem = nib.load(str(path))
        dados = np.asanyarray(imagem.dataobj)
    except (EOFError, ValueError, OSError) as exc:
        raise ArquivoError(f"dados NIfTI truncados em {path}: {exc}", code="truncated_data") from exc

    while dados.ndim > 3 and dados.shape[-1] == 1:
        dados = dados[..., 0]
    if dados.ndim != 3:
        raise ArquivoError(f"volume NIfTI precisa ser 3D, shape {dados.shape}", code="bad_header")

    espacamento = tuple(float(s) for s in cabecalho["pixdim"][1:4])
    if int(cabecalho["sform_code"]) > 0:
        sform = cabecalho.get_sform()
        linear = sform[:3, :3]
        if np.any(linear[~np.eye(3, dtype=bool)] != 0) or np.any(np.diag(linear) <= 0):
            raise ArquivoError("orientação da sform não suportada", code="unsupported_orientation")
        origem = tuple(float(o) for o in sform[:3, 3])
    else:
        quaternion = [float(cabecalho[c]) for c in ("quatern_b", "quatern_c", "quatern_d")]
        if any(q != 0 for q in quaternion) or float(cabecalho["pixdim"][0]) < 0:
            raise ArquivoError("orientação da qform não suportada", code="unsupported_orientation")
        origem = tuple(float(cabecalho[c]) for c in ("qoffset_x", "qoffset_y", "qoffset_z"))

    return Volume3(np.array(dados), espacamento, origem)


def write_nifti(vol: Volume3, path):
    """Grava em NIfTI-1 como uint8 (rótulos) ou float32, com sform e qform alinhadas."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dados = np.asarray(vol.data)
    if dados.dtype == np.uint8 or (dados.dtype == bool) or (
        np.issubdtype(dados.dtype, np.integer) and dados.min() >= 0 and dados.max() <= 255
    ):
        dados = dados.astype(np.uint8)
    else:
        dados = dados.astype(np.float32)

    imagem = nib.Nifti1Image(dados, vol.affine)
    imagem.header.set_data_dtype(dados.dtype)
    imagem.header.set_sform(vol.affine, code=1)
    imagem.header.set_qform(vol.affine, code=1)
    imagem.header.set_xyzt_units("mm")
    nib.save(imagem, str(path))
    return path


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def read_raw_json(path) -> Volume3:
    """
    Lê um volume bruto little-endian (x varia mais rápido) com o cabeçalho
    JSON ao lado (`<nome>.json`).
    """
    path = _exigir_arquivo(path)
    lateral = _sidecar(path)
    if not lateral.is_file():
        raise ArquivoError(f"cabeçalho JSON ausente: {lateral}", code="missing_sidecar")
    try:
        corpo = json.loads(lateral.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArquivoError(f"cabeçalho JSON inválido: {exc}", code="bad_header") from exc
    if not verificar_campos_obrigatorios(obrigatorios=["dims", "spacing", "dtype"], body=corpo):
        raise ArquivoError("cabeçalho JSON sem dims, spacing ou dtype", code="bad_header")
    try:
        cabecalho = VolumeHeader.model_validate(corpo)
    except ValidationError as exc:
        raise ArquivoError(f"cabeçalho JSON inválido: {exc.errors(include_url=False)}", code="bad_header") from exc

    dtype = np.dtype(_RAW_DTYPES[cabecalho.dtype])
    esperado = int(np.prod(cabecalho.dims)) * dtype.itemsize
    bruto = path.read_bytes()
    if len(bruto) != esperado:
        raise ArquivoError(
            f"tamanho dos dados {len(bruto)} != {esperado} bytes para dims {cabecalho.dims}",
            code="size_mismatch",
        )
    dados = np.frombuffer(bruto, dtype=dtype).reshape(cabecalho.dims, order="F")
    return Volume3(dados.astype(dtype.newbyteorder("="), copy=True), cabecalho.spacing, cabecalho.origin)


def write_raw_json(vol: Volume3, path, dtype: str | None = None):
    """
    Grava o volume bruto e o cabeçalho JSON.

    :param dtype:
        Opcional. Um de `u8`, `i16`, `f32`, `f64`; por padrão `u8` para
        volumes binários e `f64` para os demais.
    """
    path = Path(path)
    if dtype is None:
        dtype = "u8" if vol.is_binary() else "f64"
    if dtype not in _RAW_DTYPES:
        raise ArgumentoError(f"dtype bruto desconhecido: {dtype}")
    path.parent.mkdir(parents=True, exist_ok=True)
    dados = np.asarray(vol.data).astype(_RAW_DTYPES[dtype])
    path.write_bytes(dados.tobytes(order="F"))
    cabecalho = VolumeHeader(dims=vol.dims, spacing=vol.spacing, origin=vol.origin, dtype=dtype)
    _sidecar(path).write_text(cabecalho.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_volume(path) -> Volume3:
    """Escolhe o leitor pela extensão (`.nii`, `.nii.gz`, `.raw`)."""
    nome = Path(path).name
    if nome.endswith(".nii") or nome.endswith(".nii.gz"):
        return read_nifti(path)
    if nome.endswith(".raw"):
        return read_raw_json(path)
    raise ArgumentoError(f"formato de volume desconhecido: {path}")


def write_volume(vol: Volume3, path):
    nome = Path(path).name
    if nome.endswith(".nii") or nome.endswith(".nii.gz"):
        return write_nifti(vol, path)
    if nome.endswith(".raw"):
        return write_raw_json(vol, path)
    raise ArgumentoError(f"formato de volume desconhecido: {path}")


def _ler_ply(path: Path) -> TriMesh:
    try:
        ply = PlyData.read(str(path))
    except Exception as exc:
        raise ArquivoError(f"PLY inválido {path}: {exc}", code="bad_header") from exc
    nomes = [el.name for el in ply.elements]
    if "vertex" not in nomes:
        raise ArquivoError(f"PLY sem elemento vertex: {path}", code="bad_header")
    vertice = ply["vertex"].data
    vertices = np.stack([vertice["x"], vertice["y"], vertice["z"]], axis=1).astype(np.float64)
    if "face" not in nomes or ply["face"].count == 0:
        return TriMesh(vertices, np.zeros((0, 3), dtype=np.int64))

    face = ply["face"].data
    campo = "vertex_indices" if "vertex_indices" in face.dtype.names else "vertex_index"
    listas = face[campo]
    if any(len(lista) != 3 for lista in listas):
        raise ArquivoError(f"triangulation required: {path}", code="triangulation_required")
    return TriMesh(vertices, np.vstack(listas).astype(np.int64))


def _escrever_ply(mesh: TriMesh, path: Path, *, f64: bool, ascii: bool):
    tipo = "f8" if f64 else "f4"
    vertices = np.empty(mesh.n_vertices, dtype=[("x", tipo), ("y", tipo), ("z", tipo)])
    vertices["x"], vertices["y"], vertices["z"] = mesh.vertices.T
    faces = np.empty(mesh.n_faces, dtype=[("vertex_indices", "i4", (3,))])
    faces["vertex_indices"] = mesh.faces
    PlyData(
        [PlyElement.describe(vertices, "vertex"), PlyElement.describe(faces, "face")],
        text=ascii,
        byte_order="<",
    ).write(str(path))


def _ler_obj(path: Path) -> TriMesh:
    texto = path.read_text(encoding="utf-8", errors="replace")
    tem_vertice = False
    for linha in texto.splitlines():
        partes = linha.split()
        if not partes:
            continue
        if partes[0] == "v":
            tem_vertice = True
        elif partes[0] == "f" and len(partes) != 4:
            raise ArquivoError(f"triangulation required: {path}", code="triangulation_required")
    if not tem_vertice:
        raise ArquivoError(f"OBJ sem vértices: {path}", code="empty_file")
    malha = trimesh.load(
        str(path), file_type="obj", process=False, maintain_order=True, force="mesh"
    )
    return TriMesh(np.asarray(malha.vertices), np.asarray(malha.faces))


def _escrever_obj(mesh: TriMesh, path: Path):
    texto = export_obj(
        mesh.to_trimesh(), include_normals=False, include_texture=False, digits=10
    )
    path.write_text(texto, encoding="utf-8")


def read_mesh(path) -> TriMesh:
    """
    Lê PLY (binário little-endian ou ascii) ou OBJ.

    :raises ArquivoError:
        Para arquivo vazio, faces não triangulares (`triangulation_required`)
        ou cabeçalho inválido.
    """
    path = _exigir_arquivo(path)
    sufixo = path.suffix.lower()
    if sufixo == ".ply":
        return _ler_ply(path)
    if sufixo == ".obj":
        return _ler_obj(path)
    raise ArgumentoError(f"formato de malha desconhecido: {path}")


def write_mesh(mesh: TriMesh, path, *, f64: bool = False, ascii: bool = False):
    """
    Grava PLY (float32 por padrão, float64 com `f64=True`) ou OBJ.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sufixo = path.suffix.lower()
    if sufixo == ".ply":
        _escrever_ply(mesh, path, f64=f64, ascii=ascii)
    elif sufixo == ".obj":
        _escrever_obj(mesh, path)
    else:
        raise ArgumentoError(f"formato de malha desconhecido: {path}")
    return path


def save_model(model: DeformModel, path):
    """
    Checkpoint binário little-endian: `COSG`, versão, R, M, fatores de
    nível, dims/espaçamento/origem de cada grade, valores das grades em
    float64 e por fim os parâmetros de atenção.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partes = [_MAGIA_MODELO, struct.pack("<III", _VERSAO_MODELO, model.R, model.M)]
    partes.append(struct.pack(f"<{model.R}I", *model.level_factors[: model.R]))
    for grade in model.svf_grids:
        partes.append(struct.pack("<3I", *grade.dims))
        partes.append(struct.pack("<3d", *grade.spacing))
        partes.append(struct.pack("<3d", *grade.origin))
    for grade in model.svf_grids:
        partes.append(np.ascontiguousarray(grade.values, dtype="<f8").tobytes())
    partes.append(np.ascontiguousarray(model.attn_params, dtype="<f8").tobytes())
    path.write_bytes(b"".join(partes))
    return path


class _Leitor:
    def __init__(self, bruto: bytes, path):
        self.bruto = bruto
        self.pos = 0
        self.path = path

    def ler(self, n: int) -> bytes:
        if self.pos + n > len(self.bruto):
            raise ArquivoError(f"checkpoint truncado: {self.path}", code="truncated_data")
        trecho = self.bruto[self.pos : self.pos + n]
        self.pos += n
        return trecho

    def unpack(self, formato: str):
        return struct.unpack(formato, self.ler(struct.calcsize(formato)))


def load_model(path) -> DeformModel:
    path = _exigir_arquivo(path)
    leitor = _Leitor(path.read_bytes(), path)
    if leitor.ler(4) != _MAGIA_MODELO:
        raise ArquivoError(f"magic de checkpoint inválido: {path}", code="bad_magic")
    versao, R, M = leitor.unpack("<III")
    if versao != _VERSAO_MODELO:
        raise ArquivoError(f"versão de checkpoint {versao} não suportada", code="bad_header")
    fatores = leitor.unpack(f"<{R}I")
    metadados = []
    for _ in range(R * M):
        dims = leitor.unpack("<3I")
        espacamento = leitor.unpack("<3d")
        origem = leitor.unpack("<3d")
        metadados.append((dims, espacamento, origem))
    grades = []
    for dims, espacamento, origem in metadados:
        n = int(np.prod(dims)) * 3
        valores = np.frombuffer(leitor.ler(8 * n), dtype="<f8").reshape(*dims, 3).astype(np.float64)
        grades.append(VelocityGrid(valores, tuple(espacamento), tuple(origem)))
    atencao = np.frombuffer(leitor.ler(8 * 3 * R * M), dtype="<f8").astype(np.float64)
    if leitor.pos != len(leitor.bruto):
        raise ArquivoError(f"bytes sobrando no checkpoint: {path}", code="size_mismatch")
    return DeformModel(grades, atencao.reshape(R * M, 3), R, M, tuple(fatores))
