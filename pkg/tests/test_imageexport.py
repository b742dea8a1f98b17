#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for grayscale conversion, PGM output and triptychs."""

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.imageexport import (
    read_pgm,
    to_gray,
    triptych,
    write_image,
    write_pgm,
    write_triptych,
)


class TestGray:
    """Float to 8-bit conversion."""

    def test_rounds_and_clips(self):
        """0 -> 0, 1 -> 255, out-of-range values are clipped."""
        gray = to_gray(np.array([[0.0, 0.5, 1.0, 2.0, -1.0]]))
        assert list(gray[0]) == [0, 128, 255, 255, 0]
        assert gray.dtype == np.uint8

    def test_rejects_nan_and_wrong_rank(self):
        """NaN and non-2D input are refused."""
        with pytest.raises(ValueError, match="NaN"):
            to_gray(np.array([[np.nan]]))
        with pytest.raises(ValueError, match="2D"):
            to_gray(np.zeros(4))


class TestPgm:
    """Binary PGM files."""

    def test_header_and_pixels(self, tmp_path):
        """Width comes before height and row 0 is written first."""
        image = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        path = write_pgm(tmp_path / "topology.pgm", image)
        assert path.read_bytes().startswith(b"P5\n3 2\n255\n")
        assert np.array_equal(read_pgm(path), to_gray(image))

    def test_read_rejects_other_files(self, tmp_path):
        """Non-PGM content is reported."""
        path = tmp_path / "bogus.pgm"
        path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with pytest.raises(ValueError, match="not an 8-bit binary PGM"):
            read_pgm(path)

    def test_read_rejects_truncated_pixels(self, tmp_path):
        """Missing pixel bytes are reported."""
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_pgm(path)


class TestTriptych:
    """Target | prediction | difference panels."""

    def test_layout(self):
        """Panels sit side by side with the difference centred at 0.5."""
        target = np.ones((2, 2))
        prediction = np.zeros((2, 2))
        panel = triptych(target, prediction)
        assert panel.shape == (2, 6)
        assert np.all(panel[:, :2] == 1.0)
        assert np.all(panel[:, 2:4] == 0.0)
        assert np.all(panel[:, 4:] == 0.0)
        assert np.all(triptych(target, target)[:, 4:] == 0.5)

    def test_shape_mismatch(self):
        """Target and prediction must agree."""
        with pytest.raises(ValueError, match="Shapes differ"):
            triptych(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_write_triptych_pgm(self, tmp_path):
        """write_triptych stores a three-panel PGM."""
        path = write_triptych(tmp_path / "pair.pgm", np.ones((4, 4)), np.ones((4, 4)))
        assert read_pgm(path).shape == (4, 12)

    def test_unknown_format(self, tmp_path):
        """Only pgm and png are supported."""
        with pytest.raises(ValueError, match="Unknown image format"):
            write_image(tmp_path / "x.bmp", np.zeros((2, 2)), "bmp")

    def test_png(self, tmp_path):
        """PNG output goes through matplotlib."""
        pytest.importorskip("matplotlib")
        path = write_image(tmp_path / "x.png", np.eye(4), "png")
        assert path.read_bytes().startswith(b"\x89PNG")
