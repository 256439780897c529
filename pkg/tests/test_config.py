import pytest
from pydantic import ValidationError

from helpers.config import caminho_config, escrever_config, ler_arquivo_config, resolver_config
from helpers.erros import ArgumentoError, ArquivoError
from schemas import FitReport, IntegratorConfig, RunConfig


def test_passo_derivado_de_t_e_k():
    assert IntegratorConfig().h == pytest.approx(0.02)
    assert IntegratorConfig(T=2.0, K=40).h == pytest.approx(0.05)
    assert IntegratorConfig(T=1.0, K=50, h=0.02).h == 0.02


def test_passo_inconsistente():
    with pytest.raises(ValidationError):
        IntegratorConfig(T=1.0, K=50, h=0.03)


def test_padroes():
    run = RunConfig()
    cfg = run.fit_config()

    assert cfg.iters == 200
    assert cfg.integrator.K == 50
    assert cfg.losses.w_edge == 0.5
    assert cfg.losses.w_nc == 5.0
    assert cfg.losses.epsilon == 1e-12
    assert cfg.losses.gamma == 0.1
    assert cfg.losses.n_inflate_steps == 10
    assert run.phantom_spec().grid_dims == (128, 128, 128)
    assert run.w_inflations == [0.0, 2.0, 5.0, 10.0]


def test_prioridade_padrao_arquivo_flag(tmp_path):
    arquivo = tmp_path / "run.txt"
    arquivo.write_text("# comentario\niters = 50\nlr = 1e-3\nk = 25\nw-inflation = 5\n")

    run = resolver_config(RunConfig, arquivo=arquivo, overrides={"iters": 10, "lr": None})

    assert run.iters == 10
    assert run.lr == 1e-3
    assert run.K == 25
    assert run.w_inflation == 5.0
    assert run.w_edge == 0.5


def test_flag_em_maiuscula_vence_arquivo_em_minuscula(tmp_path):
    arquivo = tmp_path / "run.txt"
    arquivo.write_text("k = 25\n")

    assert resolver_config(RunConfig, arquivo=arquivo, overrides={"K": 10}).K == 10


def test_chave_desconhecida(tmp_path):
    arquivo = tmp_path / "run.txt"
    arquivo.write_text("iteracoes = 5\n")

    with pytest.raises(ArgumentoError) as erro:
        resolver_config(RunConfig, arquivo=arquivo)
    assert "iteracoes" in erro.value.detail


def test_valor_invalido():
    with pytest.raises(ArgumentoError):
        resolver_config(RunConfig, overrides={"pial_mode": "hausdorff"})
    with pytest.raises(ArgumentoError):
        resolver_config(RunConfig, overrides={"r0": 5.0, "fold_amp": 6.0})


def test_linha_mal_formada(tmp_path):
    arquivo = tmp_path / "run.txt"
    arquivo.write_text("iters 5\n")

    with pytest.raises(ArgumentoError):
        ler_arquivo_config(arquivo)
    with pytest.raises(ArquivoError):
        ler_arquivo_config(tmp_path / "nao_existe.txt")


def test_eco_da_configuracao_e_relido_igual(tmp_path):
    run = resolver_config(
        RunConfig, overrides={"grid_dims": "64", "w_inflations": "0,2", "max_step_mm": 0.5, "K": 20}
    )

    destino = escrever_config(run, caminho_config(tmp_path / "saida.ply"))

    assert destino.name == "saida.config.txt"
    assert resolver_config(RunConfig, arquivo=destino) == run


def test_eco_com_valores_nulos(tmp_path):
    run = RunConfig()

    destino = escrever_config(run, tmp_path / "eco.config.txt")

    assert "max_step_mm = None" in destino.read_text()
    assert resolver_config(RunConfig, arquivo=destino) == run


def test_relatorio_json_sem_tempos():
    report = FitReport(stage="white", iters=1, timings={"fit_s": 1.5})

    assert "fit_s" not in report.to_json()
    assert '"stage":"white"' in report.to_json().replace(" ", "")
