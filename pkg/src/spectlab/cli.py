"""``spectlab`` command line: generate, recon, train, bench.

Errors print one line ``error <code> <kind>: <message>`` to stderr and exit
with 2 (usage), 3 (data) or 4 (numeric failure).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np


from . import bench as B
from .classic import EmConfig, FbpConfig, fbp, mlem, osem
from .core import ArrayFormatError, ScanGeometry, export_pgm, load_image, save_image
from .dataset import Manifest, normalize_level, read_dataset, write_dataset
from .noise import CountCalibration
from .phantoms import PhantomSpec
from .projector import Projector

log = logging.getLogger("spectlab")

USAGE, DATA, NUMERIC = 2, 3, 4
KINDS = {USAGE: "usage", DATA: "data", NUMERIC: "numeric"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(USAGE, message)


def _geometry(args) -> ScanGeometry:
    try:
        return ScanGeometry(args.n, args.np, args.nr, args.bin_width)
    except ValueError as exc:
        raise CliError(USAGE, str(exc)) from None


def _calibration(args, n: int) -> CountCalibration:
    return CountCalibration(args.total_counts) if args.total_counts else CountCalibration.for_grid(n)


def _level(name: str) -> str:
    try:
        return normalize_level(name)
    except ValueError as exc:
        raise CliError(USAGE, str(exc)) from None


def _list(value: str, allowed) -> list[str]:
    if value == "all":
        return list(allowed)
    items = [_level(v) if allowed is B.LEVELS else v for v in value.split(",")]
    bad = [v for v in items if v not in allowed]
    if bad:
        raise CliError(USAGE, f"unknown choice {bad[0]!r}; expected one of {', '.join(allowed)} or all")
    return items


def _arch(name: str):
    from .nn import builtin_config
    from .nn.model import load_config

    # bare names are built-in configs, anything else is a file
    if Path(name).exists() or "/" in name or name.endswith(".cfg"):
        return load_config(name)
    return builtin_config(name)


def cmd_generate(args) -> int:
    g = _geometry(args)
    level = _level(args.noise)
    manifest = Manifest(g, _calibration(args, g.n), level, PhantomSpec(g.n), args.seed, args.count)
    write_dataset(manifest, args.out)
    log.info("wrote %d items to %s", args.count, args.out)
    return 0


def cmd_recon(args) -> int:
    g = _geometry(args)
    if args.method == "cnnr" and not args.model:
        raise CliError(USAGE, "--method cnnr requires --model")
    sino = load_image(args.input)
    if sino.shape != g.sino_shape:
        raise CliError(DATA, f"sinogram shape {sino.shape} does not match geometry {g.sino_shape}")
    if args.method == "fbp":
        image = fbp(sino, g, FbpConfig(args.filter))
    elif args.method in ("mlem", "osem"):
        projector = Projector(g)
        if args.method == "mlem":
            image = mlem(sino, projector, EmConfig(iterations=args.iterations or 100)).image
        else:
            config = EmConfig(iterations=args.iterations or 12, subsets=args.subsets)
            image = osem(sino, projector, config).image
    else:
        from .nn import cnnr_reconstruct, load_model
        from .nn.model import validate_reconstructor

        model = load_model(args.model)
        validate_reconstructor(model.config, g.n_bins, g.n_angles, g.n)
        image = cnnr_reconstruct(model, sino)
    save_image(args.out, image)
    if args.pgm:
        export_pgm(image, args.pgm)
    return 0


def cmd_train(args) -> int:
    from .nn import Model, TrainConfig, prepare_input, prepare_target, save_model, train
    from .nn.model import validate_reconstructor

    sets = [read_dataset(path) for path in args.dataset]
    g = sets[0].manifest.geometry
    if any(d.manifest.geometry != g for d in sets[1:]):
        raise CliError(DATA, "pooled datasets must share one geometry")
    sinograms = np.concatenate([d.sinograms for d in sets])
    phantoms = np.concatenate([d.phantoms for d in sets])
    config = _arch(args.config)
    validate_reconstructor(config, g.n_bins, g.n_angles, g.n)
    model = Model(config, seed=args.seed)
    settings = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed)
    result = train(model, prepare_input(sinograms), prepare_target(phantoms), settings)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, args.out)
    csv = Path(args.log) if args.log else Path(str(args.out) + ".epochs.csv")
    rows = ["epoch,train_loss,val_loss"] + [f"{r.epoch},{r.train_loss!r},{r.val_loss!r}" for r in result.history]
    csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
    log.info("best epoch %d, val loss %.5f", result.best_epoch, result.history[result.best_epoch].val_loss)
    return 0


def cmd_bench(args) -> int:
    from .nn import load_model

    g = _geometry(args)
    levels = _list(args.levels, B.LEVELS)
    methods = _list(args.methods, B.METHODS)
    models = {}
    if "cnnr" in methods:
        if not args.models:
            raise CliError(USAGE, "method cnnr requires --models DIR holding <level>.cnnr files")
        for level in levels:
            path = Path(args.models) / f"{level}.cnnr"
            if not path.exists():
                path = Path(args.models) / "all.cnnr"
            if not path.exists():
                raise CliError(DATA, f"missing model {Path(args.models) / f'{level}.cnnr'}")
            models[level] = load_model(path)
    cal = _calibration(args, g.n)
    projector = Projector(g)
    if args.test_phantom == "shepp-logan":
        test = B.shepp_logan_testset(g, levels, args.seed, cal, projector)
    else:
        test = B.dataset_testset(g, levels, args.count, args.seed, cal, projector)
    sweep = B.SweepConfig(args.mlem_iterations, args.osem_iterations, args.subsets)
    report = B.run_bench(test, methods, levels, models, sweep, projector)
    B.write_report(report, test, args.out)
    sys.stdout.write(report.to_table())
    return 0


def _add_geometry(p):
    p.add_argument("--n", type=int, default=32, help="image side in pixels")
    p.add_argument("--np", type=int, default=32, help="number of projection angles")
    p.add_argument("--nr", type=int, default=48, help="detector bins per angle")
    p.add_argument("--bin-width", type=float, default=1.0)


def build_parser() -> Parser:
    parser = Parser(prog="spectlab", description="SPECT reconstruction laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("generate", help="simulate a (phantom, noisy sinogram) dataset")
    _add_geometry(p)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", default="high", help="none, low, med/medium or high")
    p.add_argument("--total-counts", type=float, help="expected counts at full dose (default by grid size)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recon", help="reconstruct one sinogram file")
    _add_geometry(p)
    p.add_argument("--method", choices=B.METHODS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--filter", choices=("ramlak", "hann"), default="ramlak")
    p.add_argument("--iterations", type=int, help="default 100 for mlem, 12 for osem")
    p.add_argument("--subsets", type=int, default=8)
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write an 8-bit PGM preview")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("train", help="train a CNNR model on a dataset")
    p.add_argument("--dataset", required=True, action="append",
                   help="dataset directory; repeat to pool several noise levels into one model")
    p.add_argument("--config", default="desk", help="built-in config (desk, desk-compact, full) or a .cfg path")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="epoch CSV path (default <out>.epochs.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="score every method at every noise level")
    _add_geometry(p)
    p.add_argument("--test-phantom", choices=("shepp-logan", "dataset"), default="dataset")
    p.add_argument("--levels", default="all")
    p.add_argument("--methods", default="all")
    p.add_argument("--models", help="directory of <level>.cnnr files, or all.cnnr for a pooled model")
    p.add_argument("--count", type=int, default=100, help="held-out phantoms for --test-phantom dataset")
    p.add_argument("--seed", type=int, default=99, help="held-out seed; keep it distinct from training seeds")
    p.add_argument("--total-counts", type=float)
    p.add_argument("--mlem-iterations", type=int, default=100)
    p.add_argument("--osem-iterations", type=int, default=12)
    p.add_argument("--subsets", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
        return args.func(args)
    except CliError as exc:
        code, message = exc.code, str(exc)
    except FloatingPointError as exc:  # includes NumericalError
        code, message = NUMERIC, str(exc)
    except B.BenchError as exc:
        code = NUMERIC if isinstance(exc.cause, FloatingPointError) else DATA
        message = str(exc)
    except (OSError, ArrayFormatError, ValueError) as exc:
        code, message = DATA, str(exc)
    message = " ".join(message.split())
    sys.stderr.write(f"error {code} {KINDS[code]}: {message}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
