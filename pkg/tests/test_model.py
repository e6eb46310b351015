import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridarm.model import (
    INERTIA_PAD,
    UR5_ARMATURE,
    LinkParams,
    ModelError,
    Pose,
    RobotModel,
    dumps_model,
    load_model,
    loads_model,
    rod_inertia,
    rot_x,
    rot_z,
    save_model,
    ur5_default,
)


def _link(**kw):
    base = dict(mass=1.0, com_offset=[0.1, 0, 0], joint_offset=[0, 0, 0],
                inertia=np.eye(3) * 0.01)
    base.update(kw)
    return LinkParams(**base)


def test_ur5_first_link_mass(ur5):
    assert ur5.links[0].mass == 3.0
    assert [l.mass for l in ur5.links] == [3.0, 0.5, 0.5, 0.5, 0.5, 0.4]


def test_ur5_link_lengths(ur5):
    # link k's rod runs from its joint to the next joint; the last one ends at the tool
    lengths = [np.linalg.norm(l.joint_offset) for l in ur5.links[1:]]
    lengths.append(np.linalg.norm(ur5.tool_offset))
    np.testing.assert_allclose(lengths, [0.40, 0.20, 0.20, 0.17, 0.17, 0.126], atol=1e-15)
    assert np.linalg.norm(ur5.links[5].com_offset) == pytest.approx(0.063)


def test_ur5_gravity_and_base_at_rest(ur5):
    np.testing.assert_array_equal(ur5.gravity, [0.0, 0.0, -9.81])
    for name in ("base_angular_velocity", "base_angular_acceleration",
                 "base_linear_acceleration"):
        np.testing.assert_array_equal(getattr(ur5, name), np.zeros(3))


def test_ur5_rod_inertia_and_midpoint_com(ur5):
    L = [0.40, 0.20, 0.20, 0.17, 0.17, 0.126]
    for link, length in zip(ur5.links, L):
        assert np.linalg.norm(link.com_offset) == pytest.approx(length / 2)
        eig = np.sort(np.linalg.eigvalsh(link.inertia))
        # thin rod: one axial value at the pad, two transverse at mL^2/12 + pad
        assert eig[0] == pytest.approx(INERTIA_PAD)
        np.testing.assert_allclose(eig[1:], link.mass * length**2 / 12 + INERTIA_PAD)
    assert tuple(l.armature for l in ur5.links) == UR5_ARMATURE


def test_bare_rigid_chain_has_no_armature():
    assert all(l.armature == 0.0 for l in ur5_default(armature=[0.0] * 6).links)


def test_rod_inertia_axis():
    I = rod_inertia(1.2, 0.5, [0, 0, 2.0], pad=0.0)
    np.testing.assert_allclose(np.diag(I), [0.025, 0.025, 0.0])


@pytest.mark.parametrize("mass", [0.0, -1.0, np.nan])
def test_nonpositive_mass_rejected(mass):
    with pytest.raises(ModelError, match="mass > 0"):
        _link(mass=mass)


def test_inertia_checks():
    with pytest.raises(ModelError, match="symmetric"):
        _link(inertia=[[1, 0.1, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ModelError, match="positive semidefinite"):
        _link(inertia=np.diag([1.0, -0.1, 1.0]))


def test_non_finite_offsets_rejected():
    with pytest.raises(ModelError, match="finite"):
        _link(com_offset=[np.inf, 0, 0])
    with pytest.raises(ModelError, match="3 entries"):
        _link(joint_offset=[0, 0])


def test_bad_rotations_rejected():
    with pytest.raises(ModelError, match="orthonormal"):
        _link(fixed_rotation=np.diag([1.0, 1.0, 1.1]))
    with pytest.raises(ModelError, match="det"):
        _link(fixed_rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ModelError):
        Pose(np.diag([2.0, 1.0, 1.0]), np.zeros(3))


def test_negative_armature_rejected():
    with pytest.raises(ModelError, match="armature"):
        _link(armature=-0.1)


def test_empty_chain_rejected():
    with pytest.raises(ModelError, match="N >= 1"):
        RobotModel(())


def test_model_arrays_are_read_only(ur5):
    with pytest.raises(ValueError):
        ur5.arrays["mass"][0] = 1.0
    with pytest.raises(ValueError):
        ur5.gravity[2] = 0.0


def test_round_trip_identity(tmp_path, ur5):
    path = tmp_path / "ur5.model"
    save_model(ur5, path)
    again = load_model(path)
    assert again == ur5
    assert dumps_model(again) == path.read_text()


def test_with_gravity_keeps_links(ur5):
    zg = ur5.with_gravity([0, 0, 0])
    assert zg.links == ur5.links
    np.testing.assert_array_equal(zg.gravity, 0.0)


def test_file_with_negative_mass(tmp_path, ur5):
    text = dumps_model(ur5).replace("mass = 3.0", "mass = -1.0")
    with pytest.raises(ModelError, match=r"link1.*mass > 0"):
        loads_model(text, "bad.model")


def test_file_with_non_orthonormal_rotation(ur5):
    text = dumps_model(ur5)
    lines = text.splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("fixed_rotation"))
    lines[i] = "fixed_rotation = 1 0 0 0 1 0 0 0 1.5"
    with pytest.raises(ModelError, match="orthonormal"):
        loads_model("\n".join(lines))


def test_parse_errors_name_field():
    text = "[robot]\ngravity = 0 0 x\n[link1]\nmass = 1\n"
    with pytest.raises(ModelError, match="gravity"):
        loads_model(text)
    with pytest.raises(ModelError, match="missing field 'inertia'"):
        loads_model("[robot]\n[link1]\nmass = 1\n")
    with pytest.raises(ModelError, match="link1..linkN"):
        loads_model("[robot]\n[link2]\nmass = 1\n")
    with pytest.raises(ModelError, match="expected 6 numbers"):
        loads_model("[robot]\n[link1]\nmass = 1\ncom_offset = 0 0 0\n"
                    "joint_offset = 0 0 0\ninertia = 1 1 1\n")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 20.0), min_size=1, max_size=4),
       st.floats(-np.pi, np.pi), st.floats(0.0, 1.0))
def test_round_trip_random_models(masses, angle, arm):
    links = tuple(LinkParams(m, [0.1 * m, 0.0, 0.2], [0.0, 0.3, 0.0],
                             rod_inertia(m, 0.3, [1.0, 0.5, 0.0]),
                             rot_x(angle) @ rot_z(0.5 * angle), arm) for m in masses)
    model = RobotModel(links, gravity=[0.1, -9.7, 0.3], tool_offset=[0.0, 0.0, 0.05])
    assert loads_model(dumps_model(model)) == model
