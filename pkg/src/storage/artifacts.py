"""
Typed persistence of pipeline artifacts in FEEN containers, with the
mesh -> basis -> dataset -> model hash chain checked on load.
"""
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.fem.assembly import DofMap
from src.geometry.mesh import Mesh
from src.learning.branch import BranchModel
from src.learning.normalizer import Normalizer
from src.processors.dataset_builder import Dataset
from src.spectral.eigen import EigenBasis
from src.spectral.projection import ReconstructionRule
from src.storage.container import FeenContainer, read_container, write_container
from src.utils.exceptions import HashMismatch
from src.utils.logger import get_logger

logger = get_logger('storage')

PathLike = Union[str, Path]


def require_match(what: str, expected: str, found: str) -> None:
    """Raise HashMismatch when two non-empty identifiers differ."""
    if expected and found and expected != found:
        raise HashMismatch(f"{what} hash mismatch (stale artifact?)", expected=expected, found=found)


# Mesh

def save_mesh(path: PathLike, mesh: Mesh, geometry: Optional[Dict[str, Any]] = None) -> Path:
    container = FeenContainer(
        kind='mesh',
        metadata={'mesh_id': mesh.mesh_id, 'dim': mesh.dim, 'geometry': geometry or {}},
        arrays={'nodes': mesh.nodes, 'elements': mesh.elements, 'boundary_nodes': mesh.boundary_nodes},
    )
    return write_container(path, container)


def load_mesh(path: PathLike) -> Mesh:
    c = read_container(path, 'mesh')
    mesh = Mesh.from_arrays(c.arrays['nodes'], c.arrays['elements'])
    require_match('mesh', c.metadata.get('mesh_id', ''), mesh.mesh_id)
    return mesh


# Basis

def save_basis(path: PathLike, basis: EigenBasis) -> Path:
    container = FeenContainer(
        kind='basis',
        metadata={'mesh_id': basis.mesh_id, 'basis_id': basis.basis_id, 'n_modes': basis.n_modes},
        arrays={
            'eigenvalues': basis.eigenvalues,
            'modes': basis.modes,
            'interior_to_node': basis.dofs.interior_to_node,
            'node_to_interior': basis.dofs.node_to_interior,
        },
    )
    return write_container(path, container)


def load_basis(path: PathLike, mesh: Optional[Mesh] = None) -> EigenBasis:
    c = read_container(path, 'basis')
    dofs = DofMap(c.arrays['interior_to_node'], c.arrays['node_to_interior'])
    basis = EigenBasis(c.arrays['eigenvalues'], c.arrays['modes'], dofs, c.metadata.get('mesh_id', ''))
    require_match('basis', c.metadata.get('basis_id', ''), basis.basis_id)
    if mesh is not None:
        require_match('mesh', basis.mesh_id, mesh.mesh_id)
    return basis


# Dataset

def save_dataset(path: PathLike, dataset: Dataset) -> Path:
    arrays = {'outputs': dataset.outputs, 'times': dataset.times}
    for name in ('inputs_u0', 'inputs_f', 'forcing_coeffs'):
        value = getattr(dataset, name)
        if value is not None:
            arrays[name] = value
    container = FeenContainer(
        kind='dataset',
        metadata={
            'problem': dataset.problem,
            'mesh_id': dataset.mesh_id,
            'basis_id': dataset.basis_id,
            'grf_meta': dataset.grf_meta,
            'n_samples': dataset.n_samples,
        },
        arrays=arrays,
    )
    return write_container(path, container)


def load_dataset(path: PathLike, mesh: Optional[Mesh] = None, basis: Optional[EigenBasis] = None) -> Dataset:
    c = read_container(path, 'dataset')
    dataset = Dataset(
        problem=c.metadata['problem'],
        outputs=c.arrays['outputs'],
        mesh_id=c.metadata.get('mesh_id', ''),
        inputs_u0=c.arrays.get('inputs_u0'),
        inputs_f=c.arrays.get('inputs_f'),
        times=c.arrays['times'],
        forcing_coeffs=c.arrays.get('forcing_coeffs'),
        basis_id=c.metadata.get('basis_id', ''),
        grf_meta=c.metadata.get('grf_meta', {}),
    )
    if mesh is not None:
        require_match('mesh', dataset.mesh_id, mesh.mesh_id)
    if basis is not None:
        require_match('mesh', dataset.mesh_id, basis.mesh_id)
    return dataset


# Model

def save_model(path: PathLike, model: BranchModel, extra: Optional[Dict[str, Any]] = None) -> Path:
    rule = model.rule
    container = FeenContainer(
        kind='model',
        metadata={
            'mesh_id': model.mesh_id,
            'basis_id': model.basis_id,
            'rule': rule.variant,
            'diffusivity': rule.diffusivity,
            'input_normalization': model.input_normalizer.mode,
            'output_normalization': model.output_normalizer.mode,
            'n_parameters': model.n_parameters,
            **(extra or {}),
        },
        arrays={
            'weights': model.weights,
            'bias': model.bias,
            'eigenvalues': rule.eigenvalues,
            'input_mean': model.input_normalizer.mean,
            'input_std': model.input_normalizer.std,
            'output_mean': model.output_normalizer.mean,
            'output_std': model.output_normalizer.std,
        },
    )
    return write_container(path, container)


def load_model(path: PathLike, basis: Optional[EigenBasis] = None) -> BranchModel:
    c = read_container(path, 'model')
    meta, arr = c.metadata, c.arrays
    rule = ReconstructionRule(meta['rule'], arr['eigenvalues'], meta.get('diffusivity'))
    model = BranchModel(
        weights=arr['weights'],
        bias=arr['bias'],
        input_normalizer=Normalizer(meta['input_normalization'], arr['input_mean'], arr['input_std']),
        output_normalizer=Normalizer(meta['output_normalization'], arr['output_mean'], arr['output_std']),
        rule=rule,
        mesh_id=meta.get('mesh_id', ''),
        basis_id=meta.get('basis_id', ''),
    )
    if basis is not None:
        require_match('basis', model.basis_id, basis.basis_id)
    return model


def load_model_metadata(path: PathLike) -> Dict[str, Any]:
    return read_container(path, 'model').metadata


# Nodal fields (apply-g input/output, exports)

def save_field(path: PathLike, values: np.ndarray, mesh_id: str, name: str = 'values',
               extra: Optional[Dict[str, Any]] = None) -> Path:
    container = FeenContainer(kind='field', metadata={'mesh_id': mesh_id, 'name': name, **(extra or {})},
                              arrays={'values': np.asarray(values, dtype=np.float64)})
    return write_container(path, container)


def load_field(path: PathLike, mesh: Optional[Mesh] = None) -> np.ndarray:
    c = read_container(path, 'field')
    if mesh is not None:
        require_match('mesh', c.metadata.get('mesh_id', ''), mesh.mesh_id)
    return c.arrays['values']


def load_mesh_metadata(path: PathLike) -> Dict[str, Any]:
    return read_container(path, 'mesh').metadata
