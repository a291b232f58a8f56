"""Command-line entry point: ``python -m app.cli <command> [options]``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app import settings
from app.errors import InvalidArgumentError, ShapeMismatchError, ThadmmError
from app.models.geometry import ArrayLayout, Dictionary, FrequencyGrid
from app.models.network import Arch, Network
from app.schemas.config import PROFILES, RunConfig
from app.services.array_geometry import build_dictionary, freq_to_angle, subsample_positions
from app.services.config_loader import dump_run_config, load_run_config, with_seed
from app.services.datagen import draw_sample, generate_dataset, read_dataset
from app.services.eval_metrics import evaluate_sweep, find_peaks, write_results_csv, write_spectra_csv
from app.services.grad_engine import finite_diff_check, perturb_network
from app.services.registry import BASELINES, baseline_estimators, network_estimator, network_name
from app.services.trainer import TrainState, load_checkpoint, save_checkpoint, train, write_loss_csv
from app.services.unfolded_nets import forward, init_network, param_count

logger = logging.getLogger(__name__)


def build_problem(cfg: RunConfig) -> Tuple[ArrayLayout, FrequencyGrid, Dictionary]:
    layout = subsample_positions(cfg.array.full_aperture, cfg.array.M, cfg.array.seed, cfg.array.gamma)
    grid = FrequencyGrid(cfg.grid.N, cfg.array.gamma)
    return layout, grid, build_dictionary(layout, grid)


def dataset_path(cfg: RunConfig, out_dir: Path, split: str) -> Path:
    return out_dir / "data" / getattr(cfg.paths, f"{split}_file")


def checkpoint_path(out_dir: Path, arch: Arch, depth: int) -> Path:
    return out_dir / "checkpoints" / f"{arch.value}-T{depth}.json"


def _network_dictionary(net: Network, fallback: Dictionary) -> Dictionary:
    """Checkpoints carry their own layout; older ones without it use the configured array."""
    if net.layout is None:
        D = fallback
    else:
        D = build_dictionary(net.layout, FrequencyGrid(net.N, net.layout.gamma))
    if (D.M, D.N) != (net.M, net.N):
        raise ShapeMismatchError(f"{network_name(net)} expects (M, N) = ({net.M}, {net.N}), array gives ({D.M}, {D.N})")
    return D


def cmd_gen_data(cfg: RunConfig, out_dir: Path) -> List[Path]:
    layout, grid, _ = build_problem(cfg)
    written = []
    for split in ("train", "val", "test"):
        spec = getattr(cfg.data, split)
        path = dataset_path(cfg, out_dir, split)
        header = generate_dataset(spec, layout, grid, path, cfg.data.noise_per_component)
        policy = f"fixed {spec.snr_db[0]:g} dB" if header.fixed_snr else f"{len(spec.snr_db)} levels {spec.snr_db}"
        print(f"{split}: {header.count} samples, SNR {policy}, min_sep {spec.min_sep(layout.M):.5f} -> {path}")
        written.append(path)
    return written


def cmd_train(cfg: RunConfig, out_dir: Path, resume: Optional[Path] = None) -> Path:
    _, _, D = build_problem(cfg)
    arch, depth = cfg.model.arch, cfg.model.depth
    print(f"{arch.value} T={depth}: {param_count(arch, depth, D.M, D.N)} parameters (M={D.M}, N={D.N})")
    train_set = read_dataset(dataset_path(cfg, out_dir, "train"))
    val_set = read_dataset(dataset_path(cfg, out_dir, "val"))

    if resume is not None:
        state = load_checkpoint(resume, expected_arch=arch)
        if state.network.T != depth:
            raise ShapeMismatchError(f"{resume} has {state.network.T} layers, config asks for {depth}")
        net = state.network
        D = _network_dictionary(net, D)
    else:
        net = init_network(arch, depth, D)
        state = TrainState.fresh(net, cfg.train.seed)

    train(net, D, train_set, val_set, cfg.train, out_dir=out_dir / "checkpoints", state=state)
    path = save_checkpoint(state, checkpoint_path(out_dir, arch, depth))
    loss_csv = write_loss_csv(state.history, out_dir / "logs" / f"{arch.value}-T{depth}-loss.csv")
    if state.history:
        last = state.history[-1]
        print(f"epoch {last.epoch}: train {last.train_nmse_db:.3f} dB, validation {last.val_nmse_db:.3f} dB")
    print(f"checkpoint -> {path}\nloss log -> {loss_csv}")
    return path


def cmd_eval(cfg: RunConfig, out_dir: Path, checkpoints: Sequence[Path] = (),
             baselines: Sequence[str] = BASELINES, spectra: Sequence[int] = ()) -> Path:
    _, grid, D = build_problem(cfg)
    test_set = read_dataset(dataset_path(cfg, out_dir, "test"))
    if (test_set.M, test_set.N) != (D.M, D.N):
        raise ShapeMismatchError(f"test set is ({test_set.M}, {test_set.N}), array gives ({D.M}, {D.N})")

    estimators = baseline_estimators(baselines, D, cfg.eval)
    for path in checkpoints:
        net = load_checkpoint(path).network
        estimators[network_name(net)] = network_estimator(net, _network_dictionary(net, D))
    if not estimators:
        raise InvalidArgumentError("nothing to evaluate: pass --checkpoint and/or --baselines")

    reports = [evaluate_sweep(name, estimate, test_set, grid, cfg.array.gamma, cfg.eval.delta1, cfg.eval.delta2)
               for name, estimate in estimators.items()]
    results = write_results_csv(reports, out_dir / "results.csv")
    print(f"{len(reports)} methods x {len(test_set.snr_levels())} SNR levels -> {results}")

    for index in spectra:
        if not 0 <= index < len(test_set):
            raise InvalidArgumentError(f"sample {index} outside the {len(test_set)}-sample test set")
        sample = test_set.subset(np.array([index]))
        dumps = {name: estimate(sample)[0] for name, estimate in estimators.items()}
        path = write_spectra_csv(grid, cfg.array.gamma, test_set.x[index], dumps,
                                 out_dir / "spectra" / f"sample-{index}.csv")
        print(f"sample {index} ({test_set.snr_db[index]:g} dB) -> {path}")
    return results


def cmd_infer(cfg: RunConfig, out_dir: Path, checkpoint: Path, indices: Sequence[int],
              split: str = "test") -> List[Path]:
    _, _, fallback = build_problem(cfg)
    net = load_checkpoint(checkpoint).network
    D = _network_dictionary(net, fallback)
    dataset = read_dataset(dataset_path(cfg, out_dir, split))
    name = network_name(net)
    written = []
    for index in indices:
        if not 0 <= index < len(dataset):
            raise InvalidArgumentError(f"sample {index} outside the {len(dataset)}-sample {split} set")
        x_hat = forward(net, dataset.y[index], D).x_hat
        peaks = find_peaks(x_hat)
        angles = freq_to_angle(D.grid.freqs[peaks.indices], D.layout.gamma)
        listed = ", ".join(f"{a:.2f} deg (|x|={v:.3f})" for a, v in zip(np.atleast_1d(angles), peaks.values))
        print(f"{split}[{index}] {name}: {len(peaks.indices)} peaks {listed}")
        path = write_spectra_csv(D.grid, D.layout.gamma, dataset.x[index], {name: x_hat},
                                 out_dir / "spectra" / f"infer-{split}-{index}.csv")
        written.append(path)
    return written


def cmd_check_grad(archs: Sequence[Arch], M: int = 6, N: int = 16, depth: int = 3, samples: int = 10,
                   step: float = 1e-5, tolerance: float = 1e-4, seed: int = 0,
                   stop_gradient_eta: bool = False, gamma: float = 0.5) -> bool:
    """Central-difference check of every gradient on randomly perturbed small networks."""
    layout = subsample_positions(2 * M, M, seed, gamma)
    grid = FrequencyGrid(N, layout.gamma)
    D = build_dictionary(layout, grid)
    rng = np.random.default_rng([seed, 7])
    passed = True
    for arch in archs:
        net = perturb_network(init_network(arch, depth, D), rng)
        checked = excluded = 0
        worst = 0.0
        for _ in range(samples):
            sample = draw_sample(rng, layout, grid, 15.0, 1.0 / M, (1, 3))
            report = finite_diff_check(net, D, sample.y, sample.x, step=step, tolerance=tolerance,
                                       stop_gradient_eta=stop_gradient_eta)
            if report.excluded:
                excluded += 1
                logger.info("%s sample excluded: %s", arch.value, report.reason)
                continue
            checked += 1
            worst = max(worst, report.worst_rel_error)
            for coord, error in report.failures[:3]:
                print(f"  {arch.value}: {coord} relative error {error:.3e}")
            passed &= report.passed
        verdict = "ok" if worst <= tolerance else "FAIL"
        print(f"{arch.value}: {checked} samples checked, {excluded} excluded, worst {worst:.2e} {verdict}")
    return passed


def _parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidArgumentError(f"--set expects key=value, got '{pair}'")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--profile", choices=sorted(PROFILES), help="defaults the config file builds on")
    common.add_argument("--seed", type=int, help="re-seed the array, the datasets and training")
    common.add_argument("--out", type=Path, help="output directory (default: paths.out_dir)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set train.epochs=5")
    common.add_argument("--log-level", default=settings.LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="thadmm", description="Deep-unfolded sparse DoA estimation")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("gen-data", parents=[common], help="write train/val/test dataset files")

    p = commands.add_parser("train", parents=[common], help="train the configured network")
    p.add_argument("--arch", choices=[a.value for a in Arch])
    p.add_argument("--depth", type=int)
    p.add_argument("--resume", type=Path, help="continue from a checkpoint with optimizer state")

    p = commands.add_parser("eval", parents=[common], help="SNR sweep of checkpoints and baselines")
    p.add_argument("--checkpoint", type=Path, action="append", default=[])
    p.add_argument("--baselines", nargs="*", choices=BASELINES, default=list(BASELINES))
    p.add_argument("--spectra", type=int, nargs="*", default=[], help="test indices to dump as spectra CSV")

    p = commands.add_parser("infer", parents=[common], help="run a checkpoint on stored samples")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--index", type=int, nargs="+", default=[0])
    p.add_argument("--split", choices=["train", "val", "test"], default="test")

    p = commands.add_parser("check-grad", parents=[common], help="finite-difference gradient check")
    p.add_argument("--arch", choices=[a.value for a in Arch], nargs="*")
    p.add_argument("--M", type=int, default=6)
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)

    commands.add_parser("show-config", parents=[common], help="print the resolved config")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = _parse_overrides(args.set)
    if args.command == "train":
        if args.arch:
            overrides["model.arch"] = args.arch
        if args.depth:
            overrides["model.depth"] = args.depth
    cfg = load_run_config(path=args.config, profile=args.profile, overrides=overrides)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.command == "check-grad":
        archs = [Arch(a) for a in args.arch] if args.arch else list(Arch)
        ok = cmd_check_grad(archs, args.M, args.N, args.depth, args.samples, args.step, args.tolerance,
                            cfg.train.seed, cfg.train.stop_gradient_eta, cfg.array.gamma)
        return 0 if ok else 1

    out_dir = args.out or Path(cfg.paths.out_dir)
    if args.command == "show-config":
        print(dump_run_config(cfg), end="")
    elif args.command == "gen-data":
        cmd_gen_data(cfg, out_dir)
    elif args.command == "train":
        cmd_train(cfg, out_dir, args.resume)
    elif args.command == "eval":
        cmd_eval(cfg, out_dir, args.checkpoint, args.baselines, args.spectra)
    elif args.command == "infer":
        cmd_infer(cfg, out_dir, args.checkpoint, args.index, args.split)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level.upper())
    try:
        return run(args)
    except ThadmmError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
