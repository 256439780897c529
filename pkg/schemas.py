from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _lista(valor):
    if isinstance(valor, str):
        return [parte.strip() for parte in valor.replace(";", ",").split(",") if parte.strip()]
    return valor


def _dims(valor):
    valor = _lista(valor)
    if isinstance(valor, (int, str)):
        return [valor] * 3
    if isinstance(valor, (list, tuple)) and len(valor) == 1:
        return list(valor) * 3
    return valor


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(1.0, gt=0)
    K: int = Field(50, ge=1)
    h: Optional[float] = None
    clamp_step: bool = True
    max_step_mm: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def resolver_passo(self):
        passo = self.T / self.K
        if self.h is None:
            self.h = passo
        elif abs(self.h * self.K - self.T) > 1e-12:
            raise ValueError(f"h*K deve ser igual a T (h={self.h}, K={self.K}, T={self.T})")
        return self


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w_edge: float = Field(0.5, ge=0)
    w_nc: float = Field(5.0, ge=0)
    w_inflation: float = Field(2.0, ge=0)
    epsilon: float = Field(1e-12, gt=0)
    gamma: float = Field(0.1, ge=0)
    n_inflate_steps: int = Field(10, ge=0)
    pretrain_iters: int = Field(20, ge=0)
    smooth_in_pretrain: bool = True
    pial_mode: Literal["weak", "chamfer"] = "weak"


class FitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: Literal["white", "pial"] = "white"
    iters: int = Field(200, ge=1)
    lr: float = Field(1e-4, gt=0)
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    losses: LossConfig = Field(default_factory=LossConfig)
    seed: int = 0
    R: int = Field(3, ge=1)
    M: int = Field(2, ge=1)
    level_factors: list[int] = Field(default_factory=lambda: [1, 2, 4])
    grid_spacing: float = Field(1.0, gt=0)
    grid_margin_mm: float = Field(8.0, ge=0)
    param_scale: float = Field(1000.0, gt=0)
    attn_scale: float = Field(100.0, gt=0)
    clip_norm: float = Field(1e3, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    metric_samples: int = Field(10000, ge=1)

    @field_validator("level_factors", mode="before")
    @classmethod
    def separar_niveis(cls, valor):
        return _lista(valor)

    @model_validator(mode="after")
    def conferir_niveis(self):
        if len(self.level_factors) < self.R:
            raise ValueError(f"level_factors precisa de {self.R} entradas")
        if any(f < 1 for f in self.level_factors):
            raise ValueError("level_factors devem ser >= 1")
        return self


class PhantomSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_dims: tuple[int, int, int] = (128, 128, 128)
    spacing: float = Field(1.0, gt=0)
    r0: float = Field(40.0, gt=0)
    fold_amp: float = Field(8.0, ge=0)
    fold_freq: int = Field(6, ge=0)
    thickness: float = Field(3.0, gt=0)
    pve_close_radius: int = Field(1, ge=0)
    seed: int = 0
    subdivisions: int = Field(5, ge=1, le=7)

    @field_validator("grid_dims", mode="before")
    @classmethod
    def separar_dims(cls, valor):
        return _dims(valor)

    @model_validator(mode="after")
    def conferir_geometria(self):
        if self.r0 - self.fold_amp <= 0:
            raise ValueError("r0 - fold_amp deve ser positivo (superfície branca estrelada)")
        if any(n < 4 for n in self.grid_dims):
            raise ValueError("grid_dims deve ter pelo menos 4 voxels por eixo")
        return self


class MetricBlock(BaseModel):
    assd_mm: float = Field(ge=0)
    hd90_mm: float = Field(ge=0)
    thickness_err_mm: Optional[float] = Field(None, ge=0)
    sulc_err_mm: Optional[float] = Field(None, ge=0)
    mean_sulcal_depth_mm: Optional[float] = None
    selfx_faces: int = Field(0, ge=0)
    selfx_rate: float = Field(0.0, ge=0)
    sulcal_depth_kind: str = "smoothed-reference proxy"


class SurfacePairMetrics(BaseModel):
    """Blocos das superfícies branca e pial; a morfologia fica no bloco pial."""

    white: MetricBlock
    pial: MetricBlock


class TraceEntry(BaseModel):
    iteration: int
    phase: Literal["pretrain", "main"]
    total: float
    terms: dict[str, float]
    grad_norm: float
    clipped: bool = False


class FitReport(BaseModel):
    stage: Literal["white", "pial"]
    iters: int
    status: Literal["ok", "divergent"] = "ok"
    error: Optional[str] = None
    trace: list[TraceEntry] = Field(default_factory=list)
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    n_clipped: int = 0
    selfx_faces: int = 0
    selfx_rate: float = 0.0
    metrics: Optional[MetricBlock] = None
    timings: dict[str, float] = Field(default_factory=dict)

    def to_json(self) -> str:
        """JSON reprodutível (sem os tempos de relógio)."""
        return self.model_dump_json(exclude={"timings"}, indent=2)


class BenchmarkRow(BaseModel):
    name: str
    pial_mode: Literal["weak", "chamfer"]
    w_inflation: float
    metrics: MetricBlock
    final_loss: Optional[float] = None


class BenchmarkReport(BaseModel):
    phantom: PhantomSpec
    rows: list[BenchmarkRow]
    best_assd: str


class VolumeHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    dtype: Literal["u8", "i16", "f32", "f64"]
    byte_order: Literal["little"] = "little"
    order: Literal["x-fastest"] = "x-fastest"


class RunConfig(BaseModel):
    """
    Configuração plana de uma execução: arquivo `chave = valor` mais flags.

    Todos os campos de FitConfig, IntegratorConfig, LossConfig e PhantomSpec
    aparecem aqui com os valores padrão já preenchidos.
    """

    model_config = ConfigDict(extra="forbid")

    # fantoma
    grid_dims: tuple[int, int, int] = (128, 128, 128)
    spacing: float = 1.0
    r0: float = 40.0
    fold_amp: float = 8.0
    fold_freq: int = 6
    thickness: float = 3.0
    pve_close_radius: int = 1
    subdivisions: int = 5
    # superfície inicial e alvo
    sigma: float = Field(6.0, ge=0)
    level: float = 1.5
    target_verts: int = Field(10000, ge=4)
    taubin_iters: int = Field(5, ge=0)
    # ajuste
    stage: Literal["white", "pial"] = "white"
    iters: int = 200
    lr: float = 1e-4
    seed: int = 0
    R: int = 3
    M: int = 2
    level_factors: list[int] = Field(default_factory=lambda: [1, 2, 4])
    grid_spacing: float = 1.0
    grid_margin_mm: float = 8.0
    param_scale: float = 1000.0
    attn_scale: float = 100.0
    clip_norm: float = 1e3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # integrador
    T: float = 1.0
    K: int = 50
    clamp_step: bool = True
    max_step_mm: Optional[float] = None
    # perdas
    w_edge: float = 0.5
    w_nc: float = 5.0
    w_inflation: float = 2.0
    epsilon: float = 1e-12
    gamma: float = 0.1
    n_inflate_steps: int = 10
    pretrain_iters: int = 20
    smooth_in_pretrain: bool = True
    pial_mode: Literal["weak", "chamfer"] = "weak"
    # avaliação e execução
    samples: int = Field(10000, ge=1)
    sulc_smooth_iters: int = Field(200, ge=0)
    w_inflations: list[float] = Field(default_factory=lambda: [0.0, 2.0, 5.0, 10.0])
    threads: int = Field(1, ge=1)

    @field_validator("grid_dims", mode="before")
    @classmethod
    def separar_dims(cls, valor):
        return _dims(valor)

    @field_validator("level_factors", "w_inflations", mode="before")
    @classmethod
    def separar_listas(cls, valor):
        return _lista(valor)

    @field_validator("max_step_mm", mode="before")
    @classmethod
    def passo_vazio(cls, valor):
        if isinstance(valor, str) and valor.strip().lower() in ("", "none", "null"):
            return None
        return valor

    @model_validator(mode="after")
    def conferir_submodelos(self):
        self.phantom_spec()
        self.fit_config()
        return self

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(
            T=self.T, K=self.K, clamp_step=self.clamp_step, max_step_mm=self.max_step_mm
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            w_edge=self.w_edge,
            w_nc=self.w_nc,
            w_inflation=self.w_inflation,
            epsilon=self.epsilon,
            gamma=self.gamma,
            n_inflate_steps=self.n_inflate_steps,
            pretrain_iters=self.pretrain_iters,
            smooth_in_pretrain=self.smooth_in_pretrain,
            pial_mode=self.pial_mode,
        )

    def fit_config(self) -> FitConfig:
        return FitConfig(
            stage=self.stage,
            iters=self.iters,
            lr=self.lr,
            integrator=self.integrator_config(),
            losses=self.loss_config(),
            seed=self.seed,
            R=self.R,
            M=self.M,
            level_factors=self.level_factors,
            grid_spacing=self.grid_spacing,
            grid_margin_mm=self.grid_margin_mm,
            param_scale=self.param_scale,
            attn_scale=self.attn_scale,
            clip_norm=self.clip_norm,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            metric_samples=self.samples,
        )

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec(
            grid_dims=self.grid_dims,
            spacing=self.spacing,
            r0=self.r0,
            fold_amp=self.fold_amp,
            fold_freq=self.fold_freq,
            thickness=self.thickness,
            pve_close_radius=self.pve_close_radius,
            seed=self.seed,
            subdivisions=self.subdivisions,
        )
