import os

import pytest

from utils.meshes import load_mesh

root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
mesh_dir = os.path.join(root, "data", "meshes")
orders_dir = os.path.join(root, "data", "orders")

fixture_meshes = [
    "triangle",
    "two_triangles",
    "square2",
    "annulus",
    "tetrahedron",
    "tet_boundary",
    "triangle_boundary",
    "interval",
    "interval2",
    "agglomerated_square",
]


def mesh_path(name):
    return os.path.join(mesh_dir, name + ".json")


def get_mesh(name):
    return load_mesh(mesh_path(name)).complex


@pytest.fixture(scope="session")
def triangle():
    return get_mesh("triangle")


@pytest.fixture(scope="session")
def two_triangles():
    return get_mesh("two_triangles")


@pytest.fixture(scope="session")
def square2():
    return get_mesh("square2")


@pytest.fixture(scope="session")
def annulus():
    return get_mesh("annulus")


@pytest.fixture(scope="session")
def tetrahedron():
    return get_mesh("tetrahedron")


@pytest.fixture(scope="session")
def tet_boundary():
    return get_mesh("tet_boundary")


@pytest.fixture(scope="session")
def interval():
    return get_mesh("interval")


@pytest.fixture(scope="session")
def interval2():
    return get_mesh("interval2")


@pytest.fixture(scope="session")
def agglomerated():
    return get_mesh("agglomerated_square")
