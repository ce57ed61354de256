"""Command-line interface.

Exit codes: 0 success, 2 input or configuration error, 3 insufficient data,
4 analysis failure, 5 infeasible compensation.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import PRESETS, config_schema, load_config
from .environment import (
    OPENING,
    SOURCES,
    THERMAL_SOURCES,
    ContractionStack,
    EnvironmentState,
    Segment,
    compensate_stack,
    get_material,
    pressure_focal_shift,
    shift_envelope,
)
from .errors import CryofocusError, ParameterError
from .focus import (
    fov_from_magnification,
    pixel_scale,
    read_trace_csv,
    recover_focal_change,
    recover_objective_shift,
    synthesize_trace,
    telescope_shift,
    write_trace_csv,
)
from .images import load_image, save_csv_matrix, save_pgm, synth_edge_image
from .mtf import (
    EdgeROI,
    aggregate_resolution,
    measure_edge,
    mtf10,
    read_curve_csv,
    write_curve_csv,
    write_summary_csv,
)
from .paraxial import cardinal_points, compose, relay_defocus_power, relay_offsets

ORIENT = {"v": "vertical", "h": "horizontal"}


def _handled(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CryofocusError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _num(v: float, fmt: str = ".6g") -> str:
    # adding 0.0 turns -0.0 into 0.0
    return format(float(v) + 0.0, fmt)


@click.group()
@click.version_option(__version__, prog_name="cryofocus")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="System configuration JSON.")
@click.option("--preset", type=click.Choice(PRESETS), default="paper-reference", show_default=True, help="Built-in configuration used without --config.")
@click.pass_context
def main(ctx, config_path, preset):
    """Focus and resolution modelling for a cryogenic imaging relay."""
    ctx.obj = {"config_path": config_path, "preset": preset}


def _config(ctx):
    return load_config(ctx.obj["config_path"], ctx.obj["preset"])


@main.command()
@click.pass_context
@_handled
def schema(ctx):
    """Print the configuration JSON schema."""
    click.echo(json.dumps(config_schema(), indent=2, ensure_ascii=False))


@main.command()
@click.pass_context
@_handled
def model(ctx):
    """Relay matrix, cardinal points, magnification and field of view."""
    cfg = _config(ctx)
    m = compose(cfg.relay)
    cp = cardinal_points(m)
    click.echo(f"relay matrix: [[{_num(m.a)}, {_num(m.b)}], [{_num(m.c)}, {_num(m.d)}]]  det {_num(m.determinant)}")
    if cp.afocal:
        click.echo("relay: afocal")
    else:
        click.echo(
            f"relay: efl {_num(cp.effective_focal_length)} mm, bfd {_num(cp.back_focal_distance)} mm, "
            f"ffd {_num(cp.front_focal_distance)} mm, principal planes {_num(cp.front_principal_offset)} / "
            f"{_num(cp.back_principal_offset)} mm"
        )
    offsets = relay_offsets(cfg.relay)
    lenses = cfg.relay.lenses
    if len(lenses) >= 4:
        click.echo("relay offsets: " + ", ".join(f"{_num(d)} mm" for d in offsets))
        power = relay_defocus_power(offsets[0], lenses[0].focal_length, offsets[1], lenses[2].focal_length)
        f_relay = "inf" if power == 0 else _num(1.0 / power / 1000.0)
        click.echo(f"f_relay: {f_relay} m")
    M = cfg.nominal_magnification
    click.echo(f"nominal magnification: {_num(M)}")
    click.echo(f"pixel scale: {_num(pixel_scale(cfg.pixel_pitch, M) * 1000, '.4g')} nm")
    click.echo(f"fov diagonal: {_num(fov_from_magnification(M, cfg.sensor_diagonal), '.4g')} mm")
    if cfg.measured_magnification:
        Mm = cfg.measured_magnification
        click.echo(
            f"at measured M {_num(Mm)}: pixel scale {_num(pixel_scale(cfg.pixel_pitch, Mm) * 1000, '.4g')} nm, "
            f"fov diagonal {_num(fov_from_magnification(Mm, cfg.sensor_diagonal), '.4g')} mm"
        )


PERTURB_HEADER = (
    "source",
    "ds_obj_lower_um",
    "ds_obj_upper_um",
    "ds_tel_nominal_lower_mm",
    "ds_tel_nominal_upper_mm",
    "ds_tel_measured_lower_mm",
    "ds_tel_measured_upper_mm",
)


def _interval(lo, hi) -> str:
    return f"[{_num(lo, '.4g')}, {_num(hi, '.4g')}]"


def _tel_range(lo, hi, M):
    a, b = telescope_shift(lo, M), telescope_shift(hi, M)
    return min(a, b), max(a, b)


@main.command()
@click.option("--pressure", "scope", flag_value="pressure", help="Evacuation only.")
@click.option("--temperature", "scope", flag_value="temperature", help="Thermal sources only.")
@click.option("--all", "scope", flag_value="all", default=True, help="Every source (default).")
@click.option("--delta-p", type=float, default=None, help="Override differential pressure, hPa.")
@click.option("--temp-k", type=float, default=None, help="Override temperature, K.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the table as CSV.")
@click.pass_context
@_handled
def perturb(ctx, scope, delta_p, temp_k, out):
    """Objective-side focal shift envelope and its projection to the tube lens."""
    cfg = _config(ctx)
    env = EnvironmentState(
        cfg.environment.delta_pressure if delta_p is None else delta_p,
        cfg.environment.temperature if temp_k is None else temp_k,
    )
    sources = {"pressure": ("pressure",), "temperature": THERMAL_SOURCES, "all": SOURCES}[scope]
    env_ = shift_envelope(cfg.objective_variants, cfg.stacks, env, sources)
    M_nom = cfg.nominal_magnification
    M_meas = cfg.measured_magnification or M_nom

    rows = [(c.source, c.lower, c.upper) for c in env_.contributions] + [("total", env_.lower, env_.upper)]
    table = []
    for name, lo, hi in rows:
        table.append((name, lo * 1000, hi * 1000, *_tel_range(lo, hi, M_nom), *_tel_range(lo, hi, M_meas)))

    click.echo(f"environment: delta_p {_num(env.delta_pressure)} hPa, T {_num(env.temperature)} K")
    if "pressure" in sources:
        for lens in cfg.objective_variants:
            df = pressure_focal_shift(lens, env.delta_pressure) * 1000
            click.echo(f"evacuation delta_f at n={_num(lens.refractive_index)}: {_num(df, '.4g')} um")
    click.echo(f"{'source':<18}{'ds_obj [um]':>24}{f'ds_tel @M={_num(M_nom)} [mm]':>28}{f'ds_tel @M={_num(M_meas)} [mm]':>28}")
    for name, lo, hi, tn0, tn1, tm0, tm1 in table:
        click.echo(f"{name:<18}{_interval(lo, hi):>24}{_interval(tn0, tn1):>28}{_interval(tm0, tm1):>28}")
    if out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PERTURB_HEADER)
        for name, *vals in table:
            w.writerow([name, *(repr(float(v) + 0.0) for v in vals)])
        Path(out).write_text(buf.getvalue(), encoding="utf-8", newline="")


@main.command()
@click.argument("trace", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["pressure", "temperature", "all"]), default="all", show_default=True)
@_handled
def recover(trace, kind):
    """Recover delta_f (pressure) or delta_s_obj (temperature) from a focus trace CSV."""
    try:
        text = Path(trace).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read trace {trace}: {exc}") from exc
    tr = read_trace_csv(io.StringIO(text), "pressure" if kind == "pressure" else "temperature")
    click.echo(f"samples: {len(tr)}")
    if kind in ("pressure", "all"):
        click.echo(f"delta_f: {_num(recover_focal_change(tr) * 1000, '.6g')} um")
    if kind in ("temperature", "all"):
        click.echo(f"delta_s_obj: {_num(recover_objective_shift(tr) * 1000, '.6g')} um")


@main.command("synth-trace")
@click.option("--kind", type=click.Choice(["pressure", "temperature"]), default="temperature", show_default=True)
@click.option("--ds-obj", type=float, default=0.0, show_default=True, help="Net objective-side shift, mm.")
@click.option("--df", type=float, default=0.0, show_default=True, help="Net focal-length change, mm.")
@click.option("--mag", type=float, default=26.0, show_default=True, help="Magnification at the start.")
@click.option("--mag-end", type=float, default=None, help="Magnification at the end (default: constant).")
@click.option("--samples", type=click.IntRange(min=2), default=101, show_default=True)
@click.option("--s-o", type=float, default=20.0, show_default=True, help="Object distance, mm.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_handled
def synth_trace(kind, ds_obj, df, mag, mag_end, samples, s_o, out):
    """Write a synthetic focus trace with linear profiles."""
    t = np.linspace(0.0, 1.0, samples)
    abscissa = -1013.0 * t if kind == "pressure" else 293.0 - 289.0 * t
    mags = mag + ((mag if mag_end is None else mag_end) - mag) * t
    tr = synthesize_trace(abscissa, ds_obj * t, mags, delta_f=df * t, s_o=s_o, abscissa_kind=kind)
    write_trace_csv(tr, out)
    click.echo(f"wrote {samples} samples to {out}; net ds_tel {_num(tr.ds_tel[-1], '.6g')} mm")


def _parse_roi(text: str, orientation: str) -> EdgeROI:
    try:
        x0, y0, x1, y1 = (int(v) for v in text.split(","))
    except ValueError:
        raise ParameterError(f"ROI must be x0,y0,x1,y1 integers, got {text!r}") from None
    return EdgeROI(x0, y0, x1, y1, orientation)


@main.command()
@click.argument("image", type=click.Path(dir_okay=False))
@click.option("--roi", "rois", multiple=True, help="Edge region x0,y0,x1,y1 (half-open); repeatable. Default: whole image.")
@click.option("--orient", type=click.Choice(sorted(ORIENT)), default="v", show_default=True, help="Edge orientation.")
@click.option("--pitch", type=float, default=None, help="Pixel pitch in µm (default: config sensor).")
@click.option("--mag", type=float, default=None, help="Magnification (default: config nominal).")
@click.option("--no-background-subtract", is_flag=True, help="Skip the MTF noise-floor subtraction.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.pass_context
@_handled
def mtf(ctx, image, rois, orient, pitch, mag, no_background_subtract, out_dir):
    """Slanted-edge MTF10 per ROI and their aggregate."""
    if pitch is None or mag is None:
        cfg = _config(ctx)
        pitch = cfg.pixel_pitch if pitch is None else pitch
        mag = cfg.nominal_magnification if mag is None else mag
    img = load_image(image, pitch)
    orientation = ORIENT[orient]
    boxes = [_parse_roi(r, orientation) for r in rois] or [EdgeROI.full(img, orientation)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = []
    for i, roi in enumerate(boxes, 1):
        ident = f"roi{i} ({','.join(map(str, roi.bounds))})"
        try:
            curve, value = measure_edge(img, roi, mag, not no_background_subtract)
        except CryofocusError as exc:
            raise type(exc)(f"{ident}: {exc}") from exc
        write_curve_csv(curve, out / f"roi{i}_mtf.csv")
        values.append(value)
        click.echo(f"{ident}: mtf10 {_num(value, '.5g')} lp/mm, xi {_num(1000 / (2 * value), '.4g')} um")
    report = aggregate_resolution(values)
    write_summary_csv(report, out / "summary.csv")
    click.echo(
        f"aggregate: mean {_num(report.mean, '.5g')} lp/mm, std {_num(report.std, '.4g')}, "
        f"n {report.n}, xi {_num(report.resolution_um, '.4g')} um"
    )


@main.command()
@click.argument("curves", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--value", "values", type=float, multiple=True, help="MTF10 value in lp/mm; repeatable.")
@click.option("--no-background-subtract", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the summary CSV.")
@_handled
def aggregate(curves, values, no_background_subtract, out):
    """Aggregate MTF10 values from stored curve CSVs and/or explicit values."""
    vals = [mtf10(read_curve_csv(p), not no_background_subtract) for p in curves] + list(values)
    report = aggregate_resolution(vals)
    click.echo(
        f"aggregate: mean {_num(report.mean, '.5g')} lp/mm, std {_num(report.std, '.4g')}, "
        f"n {report.n}, xi {_num(report.resolution_um, '.4g')} um"
    )
    if out:
        write_summary_csv(report, out)


@main.command()
@click.option("--sigma", type=float, required=True, help="Object-space Gaussian PSF sigma, µm.")
@click.option("--pitch", type=float, default=2.3, show_default=True, help="Pixel pitch, µm.")
@click.option("--mag", type=float, default=26.0, show_default=True)
@click.option("--angle", type=float, default=5.0, show_default=True, help="Edge slant, degrees.")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Additive noise RMS.")
@click.option("--contrast", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=256, show_default=True, help="Image side, px.")
@click.option("--orient", type=click.Choice(sorted(ORIENT)), default="v", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output .pgm (16-bit) or .csv.")
@_handled
def synth(sigma, pitch, mag, angle, noise, contrast, seed, size, orient, out):
    """Synthetic slanted-edge image."""
    img = synth_edge_image(
        sigma, pitch, mag, angle, seed=seed, contrast=contrast, noise_rms=noise, size=size, orientation=ORIENT[orient]
    )
    if Path(out).suffix.lower() == ".csv":
        save_csv_matrix(img, out)
    else:
        save_pgm(img, out)
    click.echo(f"wrote {size}x{size} edge image to {out}")


def _parse_segment(text: str, table) -> Segment:
    parts = text.split(":")
    if len(parts) != 3 or parts[2] not in ("opening", "closing"):
        raise ParameterError(f"segment must be MATERIAL:LENGTH:opening|closing, got {text!r}")
    try:
        length = float(parts[1])
    except ValueError:
        raise ParameterError(f"segment length is not a number: {parts[1]!r}") from None
    return Segment(get_material(parts[0], table), length, OPENING if parts[2] == "opening" else -OPENING)


@main.command()
@click.option("--free-material", required=True, help="Material of the opening segment to size.")
@click.option("--target", type=float, default=0.0, show_default=True, help="Desired net shift, mm.")
@click.option("--fixed", "fixed", multiple=True, help="Replace the configured fixed stack: MATERIAL:LENGTH:opening|closing.")
@click.option("--empty-fixed", is_flag=True, help="Use an empty fixed stack.")
@click.pass_context
@_handled
def compensate(ctx, free_material, target, fixed, empty_fixed):
    """Length of a free segment that nulls (or sets) the stack contraction shift."""
    cfg = _config(ctx)
    material = get_material(free_material, cfg.materials)
    if empty_fixed:
        stack = ContractionStack((), "fixed")
    elif fixed:
        stack = ContractionStack([_parse_segment(s, cfg.materials) for s in fixed], "fixed")
    else:
        stack = cfg.compensation_fixed
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        length = compensate_stack(stack, material, target)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    desc = " + ".join(f"{s.material.name} {_num(s.length)} mm {'opening' if s.orientation > 0 else 'closing'}" for s in stack.segments)
    click.echo(f"fixed stack: {desc or 'empty'}")
    click.echo(f"required {material.name} length: {_num(length, '.5g')} mm (target {_num(target)} mm)")


if __name__ == "__main__":  # pragma: no cover
    main()
