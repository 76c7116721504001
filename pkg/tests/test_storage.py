"""
Tests for the FEEN container, typed artifacts and file exports.
"""
import struct

import numpy as np
import pandas as pd
import pytest

from src.geometry.mesh import generate_unit_square
from src.learning.trainer import train_from_scratch
from src.models.specs import GrfSpec, ProblemSpec, TrainConfig
from src.processors.dataset_builder import build_dataset
from src.storage.artifacts import (
    load_basis,
    load_dataset,
    load_field,
    load_mesh,
    load_model,
    load_model_metadata,
    save_basis,
    save_dataset,
    save_field,
    save_mesh,
    save_model,
)
from src.storage.container import ENTRY, HEADER, FeenContainer, read_container, write_container
from src.storage.exports import (
    REPORT_COLUMNS,
    export_vtk,
    fields_for_export,
    read_points_csv,
    write_predictions_csv,
    write_report_csv,
)
from src.utils.exceptions import ContainerError, HashMismatch, ShapeMismatch, ValidationError


class TestContainer:
    """Binary layout and integrity checks."""

    def _sample(self):
        return FeenContainer(
            kind='field',
            metadata={'name': 'demo', 'mesh_id': 'abc'},
            arrays={'values': np.linspace(0.0, 1.0, 7), 'index': np.arange(6, dtype=np.int64).reshape(2, 3)},
        )

    def test_round_trip_bit_exact(self):
        data = self._sample().to_bytes()
        back = FeenContainer.from_bytes(data)
        assert back.kind == 'field'
        assert back.metadata == {'name': 'demo', 'mesh_id': 'abc'}
        assert np.array_equal(back.arrays['values'], np.linspace(0.0, 1.0, 7))
        assert back.arrays['index'].dtype == np.int64
        assert back.arrays['index'].shape == (2, 3)
        assert back.to_bytes() == data

    def test_header_layout(self):
        data = self._sample().to_bytes()
        magic, version, count = HEADER.unpack_from(data, 0)
        assert (magic, version, count) == (b"FEEN", 1, 3)
        name = ENTRY.unpack_from(data, HEADER.size)[0].rstrip(b'\0')
        assert name == b"__metadata__"

    def test_payloads_aligned(self):
        data = self._sample().to_bytes()
        for i in range(3):
            offset = ENTRY.unpack_from(data, HEADER.size + i * ENTRY.size)[-2]
            assert offset % 8 == 0

    def test_deterministic(self):
        assert self._sample().to_bytes() == self._sample().to_bytes()

    def test_bad_magic(self):
        data = bytearray(self._sample().to_bytes())
        data[:4] = b"NOPE"
        with pytest.raises(ContainerError):
            FeenContainer.from_bytes(bytes(data))

    def test_bad_version(self):
        data = bytearray(self._sample().to_bytes())
        struct.pack_into('<I', data, 4, 99)
        with pytest.raises(ContainerError):
            FeenContainer.from_bytes(bytes(data))

    def test_truncated(self):
        data = self._sample().to_bytes()
        with pytest.raises(ContainerError):
            FeenContainer.from_bytes(data[:-16])

    def test_tampered_payload(self):
        """A flipped payload byte fails the digest check."""
        data = bytearray(self._sample().to_bytes())
        data[-1] ^= 0x01
        with pytest.raises(HashMismatch):
            FeenContainer.from_bytes(bytes(data))

    def test_wrong_kind(self, tmp_path):
        path = write_container(tmp_path / 'x.feen', self._sample())
        with pytest.raises(ContainerError):
            read_container(path, 'model')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ContainerError):
            read_container(tmp_path / 'absent.feen')

    def test_too_many_dimensions(self):
        with pytest.raises(ContainerError):
            FeenContainer('field', arrays={'v': np.zeros((1, 1, 1, 1, 1))}).to_bytes()


class TestArtifacts:
    """Mesh -> basis -> dataset -> model chain."""

    @pytest.fixture(scope="class")
    def pipeline(self, small_square, small_basis):
        dataset = build_dataset(small_square, None, ProblemSpec(), GrfSpec(n_modes=64, seed=4), 10)
        config = TrainConfig(learning_rate=1e-2, iterations=20, batch_size=4, seed=0, log_every=10)
        return dataset, train_from_scratch(dataset, small_basis, config).model

    def test_mesh(self, tmp_path, small_square):
        path = save_mesh(tmp_path / 'mesh.feen', small_square, {'kind': 'unit_square'})
        loaded = load_mesh(path)
        assert loaded.mesh_id == small_square.mesh_id
        assert np.array_equal(loaded.elements, small_square.elements)

    def test_basis(self, tmp_path, small_square, small_basis):
        path = save_basis(tmp_path / 'basis.feen', small_basis)
        loaded = load_basis(path, small_square)
        assert loaded.basis_id == small_basis.basis_id
        assert np.array_equal(loaded.nodal_modes, small_basis.nodal_modes)

    def test_basis_on_other_mesh(self, tmp_path, small_basis):
        path = save_basis(tmp_path / 'basis.feen', small_basis)
        with pytest.raises(HashMismatch):
            load_basis(path, generate_unit_square(5))

    def test_dataset(self, tmp_path, small_square, pipeline):
        dataset, _ = pipeline
        loaded = load_dataset(save_dataset(tmp_path / 'data.feen', dataset), small_square)
        assert np.array_equal(loaded.outputs, dataset.outputs)
        assert np.array_equal(loaded.inputs_f, dataset.inputs_f)
        assert loaded.inputs_u0 is None
        assert loaded.grf_meta == dataset.grf_meta

    def test_stale_dataset(self, tmp_path, pipeline):
        """A dataset from another mesh is rejected."""
        dataset, _ = pipeline
        path = save_dataset(tmp_path / 'data.feen', dataset)
        with pytest.raises(HashMismatch):
            load_dataset(path, generate_unit_square(5))

    def test_model(self, tmp_path, small_basis, pipeline):
        _, model = pipeline
        path = save_model(tmp_path / 'model.feen', model, {'train_fraction': 0.9, 'seed': 0})
        loaded = load_model(path, small_basis)
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.output_normalizer.mean, model.output_normalizer.mean)
        assert loaded.rule.variant == "poisson_scaled"
        assert load_model_metadata(path)['train_fraction'] == 0.9

    def test_model_other_basis(self, tmp_path, small_basis, pipeline):
        _, model = pipeline
        path = save_model(tmp_path / 'model.feen', model)
        with pytest.raises(HashMismatch):
            load_model(path, small_basis.truncate(11))

    def test_field(self, tmp_path, small_square):
        values = np.arange(small_square.n_nodes, dtype=float)
        path = save_field(tmp_path / 'f.feen', values, small_square.mesh_id, 'ramp')
        assert np.array_equal(load_field(path, small_square), values)
        with pytest.raises(HashMismatch):
            load_field(path, generate_unit_square(5))


class TestExports:
    """VTK and CSV output."""

    def test_vtk(self, tmp_path, small_square):
        path = export_vtk(tmp_path / 'out.vtk', small_square, {'u': np.ones(small_square.n_nodes)})
        text = path.read_text()
        assert "UNSTRUCTURED_GRID" in text

    def test_vtk_wrong_length(self, tmp_path, small_square):
        with pytest.raises(ShapeMismatch):
            export_vtk(tmp_path / 'out.vtk', small_square, {'u': np.ones(3)})

    def test_field_names(self):
        assert list(fields_for_export(np.zeros(4))) == ['u']
        assert list(fields_for_export(np.zeros((2, 4)), 'phi')) == ['phi_000', 'phi_001']

    def test_report_columns(self, tmp_path):
        path = write_report_csv(tmp_path / 'r.csv', [{'problem': 'poisson', 'rel_l2': 0.01, 'split': 'test'}])
        frame = pd.read_csv(path)
        assert list(frame.columns) == REPORT_COLUMNS + ['split']

    def test_points_csv(self, tmp_path):
        path = tmp_path / 'p.csv'
        path.write_text("X,Y,t\n0.5,0.5,1.0\n0.0,0.2,0.5\n")
        points, times = read_points_csv(path, 2)
        assert points.shape == (2, 2)
        assert np.array_equal(times, [1.0, 0.5])

    def test_points_csv_missing_column(self, tmp_path):
        path = tmp_path / 'p.csv'
        path.write_text("x\n0.5\n")
        with pytest.raises(ValidationError):
            read_points_csv(path, 2)

    def test_predictions_csv(self, tmp_path):
        path = write_predictions_csv(tmp_path / 'pred.csv', np.array([[0.1, 0.2]]), np.array([3.0]))
        assert list(pd.read_csv(path).columns) == ['x', 'y', 'u']
