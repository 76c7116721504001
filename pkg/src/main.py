"""
Main coordination module for FEENet.
Coordinates all components: meshing, eigenbasis, data generation, training,
evaluation and studies, with artifacts persisted as FEEN containers.
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from config.settings import settings
from src.fem.assembly import fem_operators
from src.geometry.locate import interpolation_matrix, structured_query_grid
from src.geometry.mesh import Mesh, build_mesh
from src.learning.branch import forward
from src.learning.trainer import train_from_scratch
from src.metrics.errors import evaluate_model, predict_dataset
from src.metrics.studies import mode_count_study, resolution_study
from src.models.specs import GeometrySpec, GrfSpec, ProblemSpec, RunConfig, TrainConfig
from src.processors.dataset_builder import Dataset, build_dataset, split_indices
from src.processors.grf import compute_cutoff_field
from src.spectral.eigen import EigenBasis, eigenbasis_for_mesh
from src.spectral.projection import SpectralFunction, apply_spectral_function, project
from src.storage import artifacts
from src.storage.exports import (
    export_vtk,
    fields_for_export,
    read_points_csv,
    write_frame_csv,
    write_predictions_csv,
    write_report_csv,
)
from src.utils.exceptions import FeenetError, MissingTime, ValidationError
from src.utils.logger import get_logger, log_operation_error, log_operation_start, log_operation_success
from src.utils.performance import generate_performance_report

logger = get_logger('coordinator')

PathLike = Union[str, Path]

# Number of leading eigenvalues echoed by the eigen command
EIGENVALUES_SHOWN = 5


def characteristic_size(mesh: Mesh) -> float:
    """Edge length of a structured simplex with the mesh's mean element volume."""
    return float((np.prod(np.arange(1, mesh.dim + 1)) * mesh.volume / mesh.n_elements) ** (1.0 / mesh.dim))


class FeenetCoordinator:
    """Main coordinator for the FEENet pipeline; one method per CLI command."""

    def __init__(self, output_dir: Optional[PathLike] = None):
        self.output_dir = Path(output_dir) if output_dir is not None else settings.ARTIFACT_PATH
        logger.debug(f"Coordinator initialized (output: {self.output_dir})")

    def artifact(self, name: Optional[PathLike], default: str) -> Path:
        """Explicit path, or ``default`` inside the output directory."""
        return Path(name) if name else self.output_dir / default

    # Artifact loading with the hash chain

    def _load_chain(self, mesh_path: PathLike, basis_path: Optional[PathLike] = None):
        mesh = artifacts.load_mesh(mesh_path)
        basis = artifacts.load_basis(basis_path, mesh) if basis_path is not None else None
        return mesh, basis

    def _held_out(self, dataset: Dataset, meta: Dict[str, Any], split: str) -> np.ndarray:
        if split == 'all':
            return np.arange(dataset.n_samples)
        train_idx, test_idx = split_indices(dataset.n_samples, meta.get('train_fraction', 0.9), meta.get('seed', 0))
        return test_idx if split == 'test' else train_idx

    # Commands

    def make_mesh(self, geometry: GeometrySpec, out: PathLike) -> Dict[str, Any]:
        """Build and store the mesh for ``geometry``."""
        log_operation_start('coordinator', 'mesh', {'kind': geometry.kind})
        mesh = build_mesh(geometry)
        artifacts.save_mesh(out, mesh, geometry.model_dump())
        summary = {**mesh.summary(), 'file': str(out)}
        log_operation_success('coordinator', 'mesh', {'nodes': mesh.n_nodes, 'elements': mesh.n_elements})
        return summary

    def compute_basis(self, mesh_path: PathLike, modes: int, out: PathLike,
                      tol_eig: Optional[float] = None, export_vtk_path: Optional[PathLike] = None) -> Dict[str, Any]:
        mesh = artifacts.load_mesh(mesh_path)
        basis = eigenbasis_for_mesh(mesh, modes, tol_eig)
        artifacts.save_basis(out, basis)
        if export_vtk_path:
            export_vtk(export_vtk_path, mesh, fields_for_export(basis.nodal_modes[:, :EIGENVALUES_SHOWN].T, 'phi'))
        return {
            'modes': basis.n_modes,
            'interior_dofs': basis.n_interior,
            'eigenvalues': [float(v) for v in basis.eigenvalues[:EIGENVALUES_SHOWN]],
            'basis_id': basis.basis_id,
            'file': str(out),
        }

    def generate_data(self, mesh_path: PathLike, problem: ProblemSpec, grf: GrfSpec, n_samples: int,
                      out: PathLike, basis_path: Optional[PathLike] = None, progress: bool = False,
                      export_vtk_path: Optional[PathLike] = None) -> Dict[str, Any]:
        mesh, basis = self._load_chain(mesh_path, basis_path)
        cutoff = compute_cutoff_field(mesh) if problem.is_heat else None
        dataset = build_dataset(mesh, cutoff, problem, grf, n_samples, basis=basis, progress=progress)
        artifacts.save_dataset(out, dataset)
        if export_vtk_path and dataset.n_samples:
            fields = {'input': dataset.sensor_inputs[0]}
            fields.update(fields_for_export(dataset.outputs[0], 'output'))
            export_vtk(export_vtk_path, mesh, fields)
        return {
            'problem': dataset.problem,
            'samples': dataset.n_samples,
            'snapshots': dataset.n_snapshots,
            'nodes': dataset.n_nodes,
            'forcing_coefficients': dataset.forcing_coeffs is not None,
            'file': str(out),
        }

    def _dataset_for_basis(self, dataset: Dataset, mesh: Mesh, basis: EigenBasis) -> Dataset:
        if dataset.problem == "heat_forced" and dataset.forcing_coeffs is None:
            return dataset.with_forcing_coeffs(basis, fem_operators(mesh).mass)
        return dataset

    def train_model(self, mesh_path: PathLike, basis_path: PathLike, dataset_path: PathLike,
                    config: TrainConfig, out: PathLike, diffusivity: Optional[float] = None,
                    history_csv: Optional[PathLike] = None, progress: bool = False) -> Dict[str, Any]:
        mesh, basis = self._load_chain(mesh_path, basis_path)
        dataset = self._dataset_for_basis(artifacts.load_dataset(dataset_path, mesh, basis), mesh, basis)
        if diffusivity is None and dataset.is_heat:
            diffusivity = dataset.grf_meta.get('problem', {}).get('diffusivity')
        result = train_from_scratch(dataset, basis, config, diffusivity, progress)
        artifacts.save_model(out, result.model, {'train_fraction': config.train_fraction, 'seed': config.seed})
        history_path = Path(history_csv) if history_csv else Path(out).with_suffix('.history.csv')
        write_frame_csv(history_path, result.history_frame())
        return {
            'parameters': result.model.n_parameters,
            'iterations': config.iterations,
            'initial_mse': result.initial_loss,
            'final_mse': result.final_loss,
            'test_mse': result.history[-1]['test_mse'],
            'file': str(out),
            'history': str(history_path),
        }

    def evaluate(self, mesh_path: PathLike, basis_path: PathLike, dataset_path: PathLike, model_path: PathLike,
                 report_csv: Optional[PathLike] = None, split: str = 'test',
                 export_vtk_path: Optional[PathLike] = None) -> Dict[str, Any]:
        mesh, basis = self._load_chain(mesh_path, basis_path)
        dataset = self._dataset_for_basis(artifacts.load_dataset(dataset_path, mesh, basis), mesh, basis)
        model = artifacts.load_model(model_path, basis)
        meta = artifacts.load_model_metadata(model_path)
        indices = self._held_out(dataset, meta, split)
        report = evaluate_model(model, dataset, basis, mesh, indices)
        row = {
            'problem': dataset.problem,
            'geometry': artifacts.load_mesh_metadata(mesh_path).get('geometry', {}).get('kind', 'external'),
            'M': model.n_modes,
            'n_points': mesh.n_nodes,
            'rel_l2': report.rel_l2,
            'rel_h1': report.rel_h1,
            'seed': meta.get('seed'),
        }
        if report_csv:
            write_report_csv(report_csv, [row])
        if export_vtk_path and indices.size:
            pred = predict_dataset(model, dataset, basis.nodal_modes, indices[:1])[0]
            truth = dataset.outputs[indices[0]]
            fields = fields_for_export(pred, 'prediction')
            fields.update(fields_for_export(truth, 'truth'))
            fields.update(fields_for_export(pred - truth, 'error'))
            export_vtk(export_vtk_path, mesh, fields)
        return {**row, 'split': split, 'samples': report.n_samples, 'aggregation': report.aggregation}

    def _sensor_input(self, mesh: Mesh, model, dataset_path: Optional[PathLike], sample: int,
                      input_path: Optional[PathLike], forcing_path: Optional[PathLike], basis: EigenBasis):
        """Sensor values and (for the forced heat variant) forcing coefficients of one input function."""
        f_coeffs = None
        if dataset_path is not None:
            dataset = self._dataset_for_basis(artifacts.load_dataset(dataset_path, mesh, basis), mesh, basis)
            if not 0 <= sample < dataset.n_samples:
                raise ValidationError("sample index out of range", field='sample', value=sample)
            inputs = dataset.sensor_inputs[sample]
            if dataset.forcing_coeffs is not None:
                f_coeffs = dataset.forcing_coeffs[sample:sample + 1]
        elif input_path is not None:
            inputs = artifacts.load_field(input_path, mesh)
            if forcing_path is not None:
                f_coeffs = project(basis, fem_operators(mesh).mass, artifacts.load_field(forcing_path, mesh)).coeffs
                f_coeffs = f_coeffs[np.newaxis, :]
        else:
            raise ValidationError("predict needs --dataset or --input", field='input')
        if model.rule.variant == "heat_forced_ode" and f_coeffs is None:
            raise ValidationError("the forced heat model needs forcing coefficients", field='forcing')
        return inputs, f_coeffs

    def predict(self, mesh_path: PathLike, basis_path: PathLike, model_path: PathLike, points_csv: PathLike,
                out_csv: PathLike, dataset_path: Optional[PathLike] = None, sample: int = 0,
                input_path: Optional[PathLike] = None, forcing_path: Optional[PathLike] = None,
                time: Optional[float] = None) -> Dict[str, Any]:
        """Evaluate the trained operator for one input function at arbitrary query points."""
        mesh, basis = self._load_chain(mesh_path, basis_path)
        model = artifacts.load_model(model_path, basis)
        points, times = read_points_csv(points_csv, mesh.dim)
        inputs, f_coeffs = self._sensor_input(mesh, model, dataset_path, sample, input_path, forcing_path, basis)

        interp = interpolation_matrix(mesh, points)
        eval_matrix = np.asarray(interp @ basis.nodal_modes)
        out_norm = model.output_normalizer.at_points(interp)
        if not model.rule.is_heat:
            values = forward(model, inputs, query_eval=eval_matrix, output_normalizer=out_norm)
        else:
            if times is None:
                if time is None:
                    raise MissingTime("heat predictions need a t column or --time", operation='predict')
                times = np.full(points.shape[0], float(time))
            values = np.empty(points.shape[0])
            for t in np.unique(times):
                rows = np.flatnonzero(times == t)
                sub_norm = model.output_normalizer.at_points(interp[rows])
                values[rows] = forward(model, inputs, t=np.array([t]), query_eval=eval_matrix[rows],
                                       f_coeffs=f_coeffs, output_normalizer=sub_norm)
        write_predictions_csv(out_csv, points, values, times)
        return {'points': int(points.shape[0]), 'file': str(out_csv),
                'min': float(values.min()) if values.size else None,
                'max': float(values.max()) if values.size else None}

    def study(self, kind: str, mesh_path: PathLike, basis_path: PathLike, dataset_path: PathLike,
              out_csv: PathLike, model_path: Optional[PathLike] = None, factors: Sequence[float] = (1, 2, 4),
              m_values: Sequence[int] = (), config: Optional[TrainConfig] = None,
              diffusivity: Optional[float] = None) -> List[Dict[str, Any]]:
        """Resolution-independence or mode-count protocol; rows are also written to ``out_csv``."""
        mesh, basis = self._load_chain(mesh_path, basis_path)
        dataset = self._dataset_for_basis(artifacts.load_dataset(dataset_path, mesh, basis), mesh, basis)
        if kind == 'resolution':
            if model_path is None:
                raise ValidationError("the resolution study needs a trained model", field='model')
            model = artifacts.load_model(model_path, basis)
            indices = self._held_out(dataset, artifacts.load_model_metadata(model_path), 'test')
            h = characteristic_size(mesh)
            grids = [structured_query_grid(mesh, h / float(f)) for f in factors]
            frame = resolution_study(model, basis, mesh, dataset, grids, indices)
        elif kind == 'modes':
            if not m_values:
                raise ValidationError("the mode-count study needs --m-values", field='m_values')
            if diffusivity is None and dataset.is_heat:
                diffusivity = dataset.grf_meta.get('problem', {}).get('diffusivity')
            frame = mode_count_study(mesh, dataset, m_values, config or TrainConfig(), basis, diffusivity)
        else:
            raise ValidationError(f"unknown study {kind!r}", field='study', value=kind)
        write_frame_csv(out_csv, frame)
        return frame.to_dict(orient='records')

    def apply_g(self, mesh_path: PathLike, basis_path: PathLike, field_path: PathLike, descriptor: str,
                out: PathLike, export_vtk_path: Optional[PathLike] = None) -> Dict[str, Any]:
        """Apply g(L) to a stored nodal field."""
        mesh, basis = self._load_chain(mesh_path, basis_path)
        g = SpectralFunction.parse(descriptor)
        u = artifacts.load_field(field_path, mesh)
        result = apply_spectral_function(basis, g, u, fem_operators(mesh).mass)
        artifacts.save_field(out, result, mesh.mesh_id, name=g.descriptor, extra={'basis_id': basis.basis_id})
        if export_vtk_path:
            export_vtk(export_vtk_path, mesh, {'input': u, 'output': result})
        return {'function': g.descriptor, 'modes': basis.n_modes, 'file': str(out),
                'max_abs': float(np.abs(result).max()) if result.size else 0.0}

    def status(self) -> Dict[str, Any]:
        return {
            'configuration': settings.get_configuration_summary(),
            'validation_errors': settings.validate_configuration(),
        }

    @staticmethod
    def schema() -> Dict[str, Any]:
        return RunConfig.model_json_schema()

    def run_full_pipeline(self, config: RunConfig, progress: bool = False) -> Dict[str, Any]:
        """Execute mesh -> eigen -> data -> train -> eval from one run configuration."""
        logger.info("Starting full FEENet pipeline", operation='pipeline',
                    extra_data={'problem': config.problem.problem, 'geometry': config.geometry.kind})
        paths = config.paths
        root = Path(paths.output_dir)
        mesh_path, basis_path = root / paths.mesh_file, root / paths.basis_file
        dataset_path, model_path = root / paths.dataset_file, root / paths.model_file

        phases = [
            ('mesh', lambda: self.make_mesh(config.geometry, mesh_path)),
            ('eigen', lambda: self.compute_basis(mesh_path, config.modes, basis_path)),
            ('data', lambda: self.generate_data(mesh_path, config.problem, config.resolved_grf(), config.n_samples,
                                                dataset_path, basis_path=basis_path, progress=progress)),
            ('train', lambda: self.train_model(mesh_path, basis_path, dataset_path, config.train, model_path,
                                               diffusivity=config.problem.diffusivity, progress=progress)),
            ('eval', lambda: self.evaluate(mesh_path, basis_path, dataset_path, model_path,
                                           report_csv=root / paths.report_file)),
        ]
        stages: Dict[str, Any] = {}
        for number, (name, run) in enumerate(phases, start=1):
            logger.info(f"Phase {number}: {name}", operation='pipeline')
            try:
                stages[name] = run()
            except FeenetError as e:
                log_operation_error('coordinator', 'pipeline', e, {'stage': name})
                raise

        report = {
            'session_info': {
                'generated_at': datetime.now().isoformat(),
                'output_dir': str(root),
            },
            'config': config.model_dump(),
            'stages': stages,
            'performance': generate_performance_report(),
        }
        report_path = root / "pipeline_report.json"
        with open(report_path, 'w', encoding='utf-8') as f:
            json.dump(report, f, indent=2, default=str)
        logger.info(f"Pipeline complete: rel_l2={stages['eval']['rel_l2']:.4e}, report saved to {report_path}",
                    operation='pipeline')
        return report
