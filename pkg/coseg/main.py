import typer

from apps.benchmark import benchmark
from apps.fit import fit
from apps.metrics import metrics
from apps.phantom import phantom
from apps.slice import slice as fatia
from apps.surface import surface

app = typer.Typer(
    no_args_is_help=True,
    add_completion=False,
    help="Superfícies corticais por deformação difeomórfica supervisionada por segmentações.",
)

app.command("phantom")(phantom.cmd_phantom)
app.command("init-surface")(surface.cmd_init_surface)
app.command("fit")(fit.cmd_fit)
app.command("metrics")(metrics.cmd_metrics)
app.command("slice")(fatia.cmd_slice)
app.command("benchmark")(benchmark.cmd_benchmark)


if __name__ == "__main__":
    app()
