import json

import numpy as np
import pytest

from core.deform import model_for_meshes
from core.fileio import (
    load_model,
    read_mesh,
    read_nifti,
    read_raw_json,
    read_volume,
    save_model,
    write_mesh,
    write_nifti,
    write_raw_json,
    write_volume,
)
from helpers.erros import ArgumentoError, ArquivoError
from models import Volume3
from tests.conftest import bola, icosfera


def test_nifti_rotulos_ida_e_volta(tmp_path):
    vol = bola(16, 5.0, spacing=0.8)

    write_nifti(vol, tmp_path / "wm.nii")
    lido = read_nifti(tmp_path / "wm.nii")

    assert lido.data.dtype == np.uint8
    np.testing.assert_array_equal(lido.data, vol.data)
    assert lido.spacing == pytest.approx(vol.spacing)
    assert lido.origin == pytest.approx(vol.origin)


def test_nifti_float_comprimido(tmp_path, rng):
    vol = Volume3(rng.normal(size=(5, 6, 7)).astype(np.float32), (1.0, 2.0, 0.5), (3.0, -4.0, 1.5))

    write_volume(vol, tmp_path / "sdf.nii.gz")
    lido = read_volume(tmp_path / "sdf.nii.gz")

    np.testing.assert_array_equal(lido.data, vol.data)
    assert lido.origin == pytest.approx(vol.origin)


def test_nifti_magic_invalido(tmp_path):
    write_nifti(bola(8, 2.0), tmp_path / "x.nii")
    bruto = bytearray((tmp_path / "x.nii").read_bytes())
    bruto[344:348] = b"ni1\x00"
    (tmp_path / "x.nii").write_bytes(bytes(bruto))

    with pytest.raises(ArquivoError) as erro:
        read_nifti(tmp_path / "x.nii")
    assert erro.value.code == "bad_magic"


def test_nifti_cabecalho_invalido(tmp_path):
    write_nifti(bola(8, 2.0), tmp_path / "x.nii")
    bruto = bytearray((tmp_path / "x.nii").read_bytes())
    bruto[0:4] = (100).to_bytes(4, "little")
    (tmp_path / "x.nii").write_bytes(bytes(bruto))

    with pytest.raises(ArquivoError) as erro:
        read_nifti(tmp_path / "x.nii")
    assert erro.value.code == "bad_header"


def test_nifti_truncado(tmp_path):
    write_nifti(bola(8, 2.0), tmp_path / "x.nii")
    (tmp_path / "x.nii").write_bytes((tmp_path / "x.nii").read_bytes()[:200])

    with pytest.raises(ArquivoError) as erro:
        read_nifti(tmp_path / "x.nii")
    assert erro.value.code == "truncated_data"


def test_raw_ida_e_volta(tmp_path, rng):
    rotulo = bola(10, 3.0)
    escalar = Volume3(rng.normal(size=(4, 5, 6)), (0.5, 0.5, 1.0), (1.0, 2.0, 3.0))

    write_raw_json(rotulo, tmp_path / "wm.raw")
    write_volume(escalar, tmp_path / "sdf.raw")

    assert json.loads((tmp_path / "wm.json").read_text())["dtype"] == "u8"
    np.testing.assert_array_equal(read_raw_json(tmp_path / "wm.raw").data, rotulo.data)
    lido = read_volume(tmp_path / "sdf.raw")
    np.testing.assert_array_equal(lido.data, escalar.data)
    assert lido.spacing == escalar.spacing
    assert lido.origin == escalar.origin


def test_raw_x_varia_mais_rapido(tmp_path):
    dados = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)

    write_raw_json(Volume3(dados), tmp_path / "v.raw", dtype="u8")

    bruto = np.frombuffer((tmp_path / "v.raw").read_bytes(), dtype=np.uint8)
    assert bruto[1] == dados[1, 0, 0]
    assert bruto[2] == dados[0, 1, 0]


def test_raw_sem_cabecalho(tmp_path):
    (tmp_path / "v.raw").write_bytes(b"\x00" * 8)

    with pytest.raises(ArquivoError) as erro:
        read_raw_json(tmp_path / "v.raw")
    assert erro.value.code == "missing_sidecar"


def test_raw_tamanho_errado(tmp_path):
    write_raw_json(bola(6, 2.0), tmp_path / "v.raw")
    (tmp_path / "v.raw").write_bytes(b"\x00" * 10)

    with pytest.raises(ArquivoError) as erro:
        read_raw_json(tmp_path / "v.raw")
    assert erro.value.code == "size_mismatch"


def test_raw_cabecalho_incompleto(tmp_path):
    (tmp_path / "v.raw").write_bytes(b"\x00" * 8)
    (tmp_path / "v.json").write_text(json.dumps({"dims": [2, 2, 2], "dtype": "u8"}))

    with pytest.raises(ArquivoError) as erro:
        read_raw_json(tmp_path / "v.raw")
    assert erro.value.code == "bad_header"


@pytest.mark.parametrize("nome, opcoes", [("m.ply", {}), ("m.ply", {"ascii": True}), ("m.obj", {})])
def test_malha_ida_e_volta(tmp_path, nome, opcoes):
    esfera = icosfera(2, 10.0)

    write_mesh(esfera, tmp_path / nome, **opcoes)
    lida = read_mesh(tmp_path / nome)

    np.testing.assert_allclose(lida.vertices, esfera.vertices, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(lida.faces, esfera.faces)


def test_ply_float64_exato(tmp_path):
    esfera = icosfera(2, 10.0)

    write_mesh(esfera, tmp_path / "m.ply", f64=True)

    np.testing.assert_array_equal(read_mesh(tmp_path / "m.ply").vertices, esfera.vertices)


def test_obj_com_quadrilatero(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")

    with pytest.raises(ArquivoError) as erro:
        read_mesh(tmp_path / "q.obj")
    assert erro.value.code == "triangulation_required"


def test_obj_sem_vertices(tmp_path):
    (tmp_path / "v.obj").write_text("# nada\n")

    with pytest.raises(ArquivoError) as erro:
        read_mesh(tmp_path / "v.obj")
    assert erro.value.code == "empty_file"


@pytest.mark.parametrize("conteudo, codigo", [(None, "missing_file"), (b"", "empty_file")])
def test_arquivo_ausente_ou_vazio(tmp_path, conteudo, codigo):
    caminho = tmp_path / "m.ply"
    if conteudo is not None:
        caminho.write_bytes(conteudo)

    with pytest.raises(ArquivoError) as erro:
        read_mesh(caminho)
    assert erro.value.code == codigo


def test_extensao_desconhecida(tmp_path):
    with pytest.raises(ArgumentoError):
        write_mesh(icosfera(1), tmp_path / "m.stl")
    with pytest.raises(ArgumentoError):
        write_volume(bola(6, 2.0), tmp_path / "v.mha")


def test_checkpoint_ida_e_volta(tmp_path, rng):
    modelo = model_for_meshes(icosfera(1, 3.0), margin_mm=2.0, R=2, M=2, level_factors=(1, 2))
    for grade in modelo.svf_grids:
        grade.values[...] = rng.normal(size=grade.values.shape)
    modelo.attn_params = rng.normal(size=modelo.attn_params.shape)

    save_model(modelo, tmp_path / "m.bin")
    lido = load_model(tmp_path / "m.bin")

    assert (lido.R, lido.M, lido.level_factors) == (2, 2, (1, 2))
    np.testing.assert_array_equal(lido.attn_params, modelo.attn_params)
    for a, b in zip(lido.svf_grids, modelo.svf_grids):
        np.testing.assert_array_equal(a.values, b.values)
        assert a.spacing == b.spacing
        assert a.origin == b.origin


def test_checkpoint_truncado_e_magic(tmp_path):
    modelo = model_for_meshes(icosfera(1, 3.0), margin_mm=1.0, R=1, M=1, level_factors=(1,))
    save_model(modelo, tmp_path / "m.bin")
    bruto = (tmp_path / "m.bin").read_bytes()

    (tmp_path / "t.bin").write_bytes(bruto[:-8])
    with pytest.raises(ArquivoError) as erro:
        load_model(tmp_path / "t.bin")
    assert erro.value.code == "truncated_data"

    (tmp_path / "x.bin").write_bytes(b"XXXX" + bruto[4:])
    with pytest.raises(ArquivoError) as erro:
        load_model(tmp_path / "x.bin")
    assert erro.value.code == "bad_magic"

    (tmp_path / "s.bin").write_bytes(bruto + b"\x00")
    with pytest.raises(ArquivoError) as erro:
        load_model(tmp_path / "s.bin")
    assert erro.value.code == "size_mismatch"
