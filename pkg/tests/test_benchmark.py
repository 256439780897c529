import pytest

from core.benchmark import run_pial_ablation
from schemas import FitConfig, PhantomSpec


def test_ablacao_pial_monta_uma_linha_por_configuracao(fantoma_pequeno, fit_rapido):
    spec = fantoma_pequeno.model_copy(update={"subdivisions": 2})

    relatorio = run_pial_ablation(
        spec, fit_rapido, w_inflations=(0.0, 2.0), include_chamfer=True, n_samples=500, sulc_smooth_iters=10
    )

    assert [linha.name for linha in relatorio.rows] == ["weak_w0", "weak_w2", "chamfer"]
    assert [linha.pial_mode for linha in relatorio.rows] == ["weak", "weak", "chamfer"]
    assert relatorio.best_assd in {linha.name for linha in relatorio.rows}
    melhor = min(relatorio.rows, key=lambda linha: linha.metrics.assd_mm)
    assert relatorio.best_assd == melhor.name
    for linha in relatorio.rows:
        assert linha.metrics.thickness_err_mm is not None
        assert linha.metrics.mean_sulcal_depth_mm is not None
    assert relatorio.phantom == spec


@pytest.mark.slow
def test_perda_fraca_supera_chamfer_no_fantoma_com_volume_parcial():
    relatorio = run_pial_ablation(PhantomSpec(), FitConfig(stage="pial", iters=200), w_inflations=(0.0, 2.0))
    linhas = {linha.name: linha.metrics for linha in relatorio.rows}

    fraca = linhas["weak_w2"]
    assert fraca.assd_mm < linhas["chamfer"].assd_mm
    assert fraca.assd_mm < linhas["weak_w0"].assd_mm
    assert fraca.mean_sulcal_depth_mm > linhas["chamfer"].mean_sulcal_depth_mm
    assert fraca.mean_sulcal_depth_mm > linhas["weak_w0"].mean_sulcal_depth_mm
    for metricas in linhas.values():
        assert metricas.selfx_rate < 5e-4
