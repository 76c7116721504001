#!/usr/bin/env python3
"""
Command-line runner for FEENet.
Each subcommand maps onto one FeenetCoordinator method; artifacts are FEEN
containers and reports go to stdout (plain or --json) while logs go to stderr.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

# Add project root to path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from config.settings import settings
from src.main import FeenetCoordinator
from src.models.specs import GeometrySpec, GrfSpec, ProblemSpec, RunConfig, TrainConfig, parse_spec
from src.storage.artifacts import load_mesh_metadata
from src.utils.exceptions import FeenetError, exit_code_for
from src.utils.logger import configure_logging, get_logger

logger = get_logger('cli')

GEOMETRY_KINDS = {'square': 'unit_square', 'fins': 'fins', 'file': 'external_file'}


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v.strip()]


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def geometry_from_args(args) -> GeometrySpec:
    fins = _drop_none({
        'fin_count': args.fins,
        'fin_width': args.fin_width,
        'fin_length': args.fin_length,
        'base_width': args.base_width,
        'base_height': args.base_height,
    })
    data = _drop_none({
        'kind': GEOMETRY_KINDS[args.geometry],
        'n_per_side': args.n,
        'resolution': args.resolution,
        'path': args.path,
        'mesher': args.mesher,
    })
    if fins:
        data['fins_params'] = fins
    return parse_spec(GeometrySpec, data)


def problem_from_args(args) -> ProblemSpec:
    return parse_spec(ProblemSpec, _drop_none({
        'problem': args.problem,
        'diffusivity': args.diffusivity,
        't_final': args.t_final,
        'dt': args.dt,
        'snapshot_times': args.snapshots,
    }))


def grf_from_args(args, mesh_path) -> GrfSpec:
    kind = load_mesh_metadata(mesh_path).get('geometry', {}).get('kind', 'external_file')
    overrides = _drop_none({
        'variance': args.variance,
        'length_scale': args.length_scale,
        'n_modes': args.grf_modes,
        'seed': args.seed if args.seed is not None else settings.DEFAULT_SEED,
    })
    return parse_spec(GrfSpec, {**GrfSpec.for_geometry(kind).model_dump(), **overrides})


def train_config_from_args(args) -> TrainConfig:
    if args.config:
        base = RunConfig.from_json(args.config).train.model_dump()
    else:
        base = {'log_every': settings.LOG_EVERY, 'seed': settings.DEFAULT_SEED}
    return parse_spec(TrainConfig, {**base, **_drop_none({
        'learning_rate': args.lr,
        'iterations': args.iterations,
        'batch_size': args.batch_size,
        'seed': args.seed,
        'train_fraction': args.train_fraction,
        'log_every': args.log_every,
        'input_normalization': args.input_normalization,
        'output_normalization': args.output_normalization,
    })})


def emit(result: Any, as_json: bool) -> None:
    """Reports go to stdout; logs stay on stderr."""
    if as_json:
        print(json.dumps(result, indent=2, default=str))
    elif isinstance(result, list):
        print(pd.DataFrame(result).to_string(index=False))
    else:
        for key, value in result.items():
            print(f"{key}: {value}")


# Command handlers

def cmd_mesh(coord: FeenetCoordinator, args):
    return coord.make_mesh(geometry_from_args(args), coord.artifact(args.out, 'mesh.feen'))


def cmd_eigen(coord: FeenetCoordinator, args):
    return coord.compute_basis(coord.artifact(args.mesh, 'mesh.feen'), args.modes,
                               coord.artifact(args.out, 'basis.feen'), args.tol_eig, args.export_vtk)


def cmd_data(coord: FeenetCoordinator, args):
    mesh_path = coord.artifact(args.mesh, 'mesh.feen')
    return coord.generate_data(mesh_path, problem_from_args(args), grf_from_args(args, mesh_path), args.samples,
                               coord.artifact(args.out, 'dataset.feen'), basis_path=args.basis,
                               progress=args.progress, export_vtk_path=args.export_vtk)


def cmd_train(coord: FeenetCoordinator, args):
    return coord.train_model(
        coord.artifact(args.mesh, 'mesh.feen'), coord.artifact(args.basis, 'basis.feen'),
        coord.artifact(args.dataset, 'dataset.feen'), train_config_from_args(args),
        coord.artifact(args.out, 'model.feen'), diffusivity=args.diffusivity, history_csv=args.history,
        progress=args.progress,
    )


def cmd_eval(coord: FeenetCoordinator, args):
    return coord.evaluate(
        coord.artifact(args.mesh, 'mesh.feen'), coord.artifact(args.basis, 'basis.feen'),
        coord.artifact(args.dataset, 'dataset.feen'), coord.artifact(args.model, 'model.feen'),
        report_csv=coord.artifact(args.report, 'report.csv'), split=args.split, export_vtk_path=args.export_vtk,
    )


def cmd_predict(coord: FeenetCoordinator, args):
    return coord.predict(
        coord.artifact(args.mesh, 'mesh.feen'), coord.artifact(args.basis, 'basis.feen'),
        coord.artifact(args.model, 'model.feen'), args.points, coord.artifact(args.out, 'predictions.csv'),
        dataset_path=args.dataset, sample=args.sample, input_path=args.input, forcing_path=args.forcing,
        time=args.time,
    )


def cmd_study(coord: FeenetCoordinator, args):
    return coord.study(
        args.kind, coord.artifact(args.mesh, 'mesh.feen'), coord.artifact(args.basis, 'basis.feen'),
        coord.artifact(args.dataset, 'dataset.feen'), coord.artifact(args.out, f'study_{args.kind}.csv'),
        model_path=coord.artifact(args.model, 'model.feen') if args.kind == 'resolution' else None,
        factors=args.factors, m_values=args.m_values or [], config=train_config_from_args(args),
        diffusivity=args.diffusivity,
    )


def cmd_apply_g(coord: FeenetCoordinator, args):
    return coord.apply_g(coord.artifact(args.mesh, 'mesh.feen'), coord.artifact(args.basis, 'basis.feen'),
                         args.field, args.function, coord.artifact(args.out, 'g_field.feen'), args.export_vtk)


def cmd_pipeline(coord: FeenetCoordinator, args):
    report = coord.run_full_pipeline(RunConfig.from_json(args.config), progress=args.progress)
    return {'rel_l2': report['stages']['eval']['rel_l2'], 'rel_h1': report['stages']['eval']['rel_h1'],
            'output_dir': report['session_info']['output_dir']}


def cmd_status(coord: FeenetCoordinator, args):
    return coord.status()


def cmd_schema(coord: FeenetCoordinator, args):
    return coord.schema()


# Parser

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig JSON supplying training defaults")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--iterations", type=int, help="Number of Adam steps")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, help="Seed for initialization, split and batches")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--log-every", type=int)
    p.add_argument("--input-normalization", choices=['auto', 'zscore', 'identity'])
    p.add_argument("--output-normalization", choices=['auto', 'zscore', 'identity'])
    p.add_argument("--diffusivity", type=float, help="Diffusivity for heat problems (default: from dataset)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="FEENet: finite element eigenfunction networks for PDE operator learning",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run_feenet.py mesh --geometry square --n 35
  python run_feenet.py eigen --modes 100
  python run_feenet.py data --problem poisson --samples 500 --seed 0
  python run_feenet.py train --iterations 20000 --lr 4e-5
  python run_feenet.py eval --json
  python run_feenet.py study resolution --factors 1,2,4
  python run_feenet.py pipeline --config config/run_config.example.json

Exit codes: 0 ok, 1 unexpected, 2 invalid input, 3 geometry, 4 not converged,
5 hash mismatch (stale artifact), 6 non-finite loss
        """
    )
    parser.add_argument("--json", action="store_true", help="Machine-readable output on stdout")
    parser.add_argument("--output-dir", help="Directory for default artifact paths")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    parser.add_argument("--no-log-file", action="store_true", help="Log to stderr only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="Generate or import a mesh")
    p.add_argument("--geometry", choices=sorted(GEOMETRY_KINDS), default="square")
    p.add_argument("--n", type=int, help="Nodes per side of the structured square")
    p.add_argument("--resolution", type=float, help="Target element size h")
    p.add_argument("--path", help="Gmsh MSH 4.1 ASCII file for --geometry file")
    p.add_argument("--mesher", choices=['auto', 'triangle', 'grid'])
    p.add_argument("--fins", type=int, help="Number of fins")
    p.add_argument("--fin-width", type=float)
    p.add_argument("--fin-length", type=float)
    p.add_argument("--base-width", type=float)
    p.add_argument("--base-height", type=float)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_mesh)

    p = sub.add_parser("eigen", help="Compute the Dirichlet Laplacian eigenbasis")
    p.add_argument("--mesh")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--tol-eig", type=float)
    p.add_argument("--out")
    p.add_argument("--export-vtk", help="Write the leading modes as VTK")
    p.set_defaults(handler=cmd_eigen)

    p = sub.add_parser("data", help="Generate a GRF dataset with ground truth")
    p.add_argument("--mesh")
    p.add_argument("--basis", help="Basis for precomputed forcing coefficients (heat_forced)")
    p.add_argument("--problem", choices=['poisson', 'heat_homogeneous', 'heat_forced'], default='poisson')
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--variance", type=float)
    p.add_argument("--length-scale", type=float)
    p.add_argument("--grf-modes", type=int)
    p.add_argument("--diffusivity", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--snapshots", type=_floats, help="Comma-separated snapshot times")
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out")
    p.add_argument("--export-vtk", help="Write the first sample as VTK")
    p.set_defaults(handler=cmd_data)

    p = sub.add_parser("train", help="Train the branch network")
    for name in ("--mesh", "--basis", "--dataset", "--out"):
        p.add_argument(name)
    p.add_argument("--history", help="Loss history CSV (default: next to the model)")
    p.add_argument("--progress", action="store_true")
    _add_train_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Relative L2/H1 errors of a trained model")
    for name in ("--mesh", "--basis", "--dataset", "--model", "--report"):
        p.add_argument(name)
    p.add_argument("--split", choices=['test', 'train', 'all'], default='test')
    p.add_argument("--export-vtk", help="Write prediction, truth and error of the first sample as VTK")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="Evaluate a model at query points")
    for name in ("--mesh", "--basis", "--model", "--out"):
        p.add_argument(name)
    p.add_argument("--points", required=True, help="CSV with columns x[,y[,z]][,t]")
    p.add_argument("--dataset", help="Take the input function from this dataset")
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--input", help="Field file with the input function")
    p.add_argument("--forcing", help="Field file with the forcing term (heat_forced)")
    p.add_argument("--time", type=float, help="Time for heat models when the CSV has no t column")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("study", help="Resolution-independence or mode-count study")
    p.add_argument("kind", choices=['resolution', 'modes'])
    for name in ("--mesh", "--basis", "--dataset", "--model", "--out"):
        p.add_argument(name)
    p.add_argument("--factors", type=_floats, default=[1.0, 2.0, 4.0], help="Query grid refinement factors")
    p.add_argument("--m-values", type=_ints, help="Comma-separated mode counts")
    _add_train_flags(p)
    p.set_defaults(handler=cmd_study)

    p = sub.add_parser("apply-g", help="Apply a spectral function g(L) to a field")
    for name in ("--mesh", "--basis", "--out"):
        p.add_argument(name)
    p.add_argument("--field", required=True)
    p.add_argument("--function", required=True, help="identity | pow:a | exp-scale:a | sin:a")
    p.add_argument("--export-vtk")
    p.set_defaults(handler=cmd_apply_g)

    p = sub.add_parser("pipeline", help="Run mesh -> eigen -> data -> train -> eval from a RunConfig")
    p.add_argument("--config", required=True)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=cmd_pipeline)

    sub.add_parser("status", help="Show settings and validation").set_defaults(handler=cmd_status)
    sub.add_parser("schema", help="Print the RunConfig JSON schema").set_defaults(handler=cmd_schema)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the runner script."""
    parser = build_parser()
    args = parser.parse_args(argv)

    log_level = "DEBUG" if args.verbose else settings.LOG_LEVEL
    configure_logging(log_level, None if args.no_log_file else settings.LOG_PATH)

    coord = FeenetCoordinator(args.output_dir)
    try:
        result = args.handler(coord, args)
    except FeenetError as e:
        logger.error(str(e), operation=args.command)
        return exit_code_for(e)
    except KeyboardInterrupt:
        logger.warning("Interrupted by user", operation=args.command)
        return 130
    except Exception as e:
        logger.exception(f"Unexpected error: {e}", operation=args.command)
        return exit_code_for(e)

    emit(result, args.json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
