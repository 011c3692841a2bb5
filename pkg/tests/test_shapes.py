import numpy as np
import pytest

from convexshape.geometry import GeometryError
from convexshape.shapes import Shape, shape_from_dict

TH = np.linspace(0, 2 * np.pi, 721)


@pytest.mark.parametrize("shape,area,perimeter", [
    (Shape("disk", radius=2.0), 4 * np.pi, 4 * np.pi),
    (Shape("square", side=1.5), 2.25, 6.0),
    (Shape("reuleaux", width=1.0), (np.pi - np.sqrt(3)) / 2, np.pi),
    (Shape("triangle", side=1.0), np.sqrt(3) / 4, 3.0),
])
def test_fixture_area_perimeter(shape, area, perimeter):
    assert shape.area() == pytest.approx(area, rel=1e-9)
    assert shape.perimeter() == pytest.approx(perimeter, rel=1e-9)


def test_reuleaux_has_constant_width():
    R = Shape("reuleaux", width=1.3, angle=0.4)
    assert np.allclose(R.support(TH) + R.support(TH + np.pi), 1.3)


def test_square_gauge_closed_form():
    side = 2.0
    g = Shape("square", side=side).gauge(TH)
    assert np.allclose(g, np.maximum(np.abs(np.cos(TH)), np.abs(np.sin(TH))) * 2 / side)


@pytest.mark.parametrize("shape", [Shape("disk", radius=0.7, center=(0.1, 0.2)), Shape("square"),
                                   Shape("reuleaux"), Shape("ellipse", a=2.0, b=0.5),
                                   Shape("triangle", side=2.0, angle=0.3)])
def test_gauge_is_reciprocal_radius(shape):
    # boundary point along each ray must have support-tight direction
    g = shape.gauge(TH)
    pts = np.column_stack([np.cos(TH), np.sin(TH)]) / g[:, None]
    phi = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    u = np.column_stack([np.cos(phi), np.sin(phi)])
    assert np.all(pts @ u.T <= shape.support(phi)[None, :] + 1e-9)


def test_shape_from_dict_and_rejects_unknown():
    s = shape_from_dict({"kind": "polygon", "vertices": [[0, 0], [1, 0], [0, 1]]})
    assert s.area() == pytest.approx(0.5)
    with pytest.raises(GeometryError):
        shape_from_dict({"kind": "blob"})
    with pytest.raises(GeometryError):
        shape_from_dict({"kind": "polygon", "vertices": [[0, 0], [1, 0], [0.2, 0.2], [0, 1], [1, 1]]})
