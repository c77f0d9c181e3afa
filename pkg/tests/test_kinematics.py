import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from kinedict import quat
from kinedict.errors import DataError, InvalidInputError
from kinedict.kinematics import Camera, Skeleton, forward_kinematics, project, r6_to_rotation, rotation_to_r6

from helpers import chain_skeleton
from oracles import fk_homogeneous


def identity_pose(skel):
    return np.tile(quat.IDENTITY, (skel.n_joints - 1, 1))


class TestSkeleton:
    def test_default(self):
        sk = Skeleton.default()
        assert sk.n_joints == 24
        assert len(sk.articulated) == 23
        assert sk.parents[0] == -1
        assert np.all(sk.parents[1:] < np.arange(1, 24))
        assert_array_equal(sk.offsets[0], 0.0)

    def test_height_is_human(self):
        X = forward_kinematics(Skeleton.default(), identity_pose(Skeleton.default()))
        assert 1.4 < np.ptp(X[:, 1]) < 2.0

    def test_json_round_trip(self, tmp_path):
        sk = Skeleton.default()
        sk.save(tmp_path / "s.json")
        back = Skeleton.load(tmp_path / "s.json")
        assert back.names == sk.names
        assert_array_equal(back.parents, sk.parents)
        assert_array_equal(back.offsets, sk.offsets)
        assert set(json.loads((tmp_path / "s.json").read_text())["joints"][0]) == {"name", "parent", "offset"}

    @pytest.mark.parametrize(
        "parents",
        [[-1, -1, 0], [-1, 2, 0], [0, 0, 1]],
    )
    def test_rejects_bad_topology(self, parents):
        with pytest.raises(InvalidInputError):
            Skeleton(("a", "b", "c"), np.array(parents), np.zeros((3, 3)))

    def test_malformed_file(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"joints": [{"name": "a"}]}')
        with pytest.raises(DataError):
            Skeleton.load(tmp_path / "bad.json")


class TestForwardKinematics:
    def test_rest_pose_is_cumulative_offsets(self):
        sk = Skeleton.default()
        X = forward_kinematics(sk, identity_pose(sk))
        ref = np.zeros((24, 3))
        for j in range(1, 24):
            ref[j] = ref[sk.parents[j]] + sk.offsets[j]
        assert_allclose(X, ref, atol=1e-15)

    def test_three_joint_chain(self):
        sk = chain_skeleton(3)
        pose = np.stack([quat.from_axis_angle((0, 0, 1.0), np.pi / 2), quat.IDENTITY])
        X = forward_kinematics(sk, pose)
        # the middle joint sits at (1, 0, 0); its rotation swings the end bone to +y
        assert_allclose(X[2], [1.0, 1.0, 0.0], atol=1e-15)
        assert_allclose(fk_homogeneous(sk.parents, sk.offsets, pose)[2], [1.0, 1.0, 0.0], atol=1e-15)

    def test_homogeneous_oracle(self, rng):
        sk = Skeleton.default()
        for _ in range(100):
            pose = quat.random_uniform(rng, 23)
            assert np.max(np.abs(forward_kinematics(sk, pose) - fk_homogeneous(sk.parents, sk.offsets, pose))) < 1e-10

    def test_root_children_rotation_equivariance(self, rng):
        # rotating every child of the root by a common R rigidly rotates the
        # rest pose, since the root's children share the root frame
        sk = Skeleton.default()
        q = quat.random_uniform(rng)
        R = quat.to_matrix(q)
        # map each joint's pose so that the world frames become R W_j
        pose = identity_pose(sk)
        for j in range(1, 24):
            if sk.parents[j] == 0:
                pose[j - 1] = q
        X = forward_kinematics(sk, pose)
        rest = forward_kinematics(sk, identity_pose(sk))
        # children of root rotate their subtree about themselves; their offsets
        # are in the root frame, so compare relative to each root child
        for j in range(1, 24):
            if sk.parents[j] == 0:
                continue
            anc = j
            while sk.parents[anc] != 0:
                anc = sk.parents[anc]
            assert_allclose(X[j] - X[anc], (rest[j] - rest[anc]) @ R.T, atol=1e-12)

    def test_root_rotation_equivariance(self, rng):
        sk = Skeleton.default()
        pose = quat.random_uniform(rng, 23)
        R = quat.to_matrix(quat.random_uniform(rng))
        assert_allclose(forward_kinematics(sk, pose, root_rotation=R), forward_kinematics(sk, pose) @ R.T,
                        atol=1e-12)

    def test_root_offset_translates(self, rng):
        sk = Skeleton.default()
        pose = quat.random_uniform(rng, 23)
        shift = np.array([0.3, -1.2, 2.0])
        off = sk.offsets.copy()
        off[0] += shift
        moved = Skeleton(sk.names, sk.parents, off)
        assert_allclose(forward_kinematics(moved, pose), forward_kinematics(sk, pose) + shift, atol=1e-14)

    def test_rejects_wrong_pose_shape(self):
        with pytest.raises(InvalidInputError):
            forward_kinematics(Skeleton.default(), np.tile(quat.IDENTITY, (22, 1)))

    def test_world_rotations(self, rng):
        sk = chain_skeleton(4)
        pose = quat.random_uniform(rng, 3)
        _, W = forward_kinematics(sk, pose, return_world=True)
        ref = np.eye(3)
        for j in range(1, 4):
            ref = ref @ quat.to_matrix(pose[j - 1])
            assert_allclose(W[j], ref, atol=1e-14)


class TestR6:
    def test_identity(self):
        assert_array_equal(r6_to_rotation([1, 0, 0, 0, 1, 0]), np.eye(3))

    def test_recovers_rotation(self, rng):
        for q in quat.random_uniform(rng, 20):
            R = quat.to_matrix(q)
            assert_allclose(r6_to_rotation(rotation_to_r6(R)), R, atol=1e-12)

    def test_random_is_proper(self, rng):
        for v in rng.normal(size=(100, 6)):
            R = r6_to_rotation(v)
            assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(R) - 1.0) < 1e-9
            assert_allclose(R[:, 0], v[:3] / np.linalg.norm(v[:3]), atol=1e-15)

    @pytest.mark.parametrize("v", [[0, 0, 0, 0, 1, 0], [1, 0, 0, 2, 0, 0], [1, 2, 3, np.nan, 0, 0]])
    def test_degenerate(self, v):
        with pytest.raises(InvalidInputError):
            r6_to_rotation(v)


class TestProject:
    def test_examples(self):
        P = np.array([[1.0, 2.0, 3.0]])
        assert_array_equal(project(P, Camera()), [[1.0, 2.0]])
        assert_array_equal(project(P, Camera(2.0, (1.0, 1.0))), [[3.0, 5.0]])
        Rz = quat.to_matrix(quat.from_axis_angle((0, 0, 1.0), np.pi / 2))
        assert_allclose(project(np.array([[1.0, 0, 0]]), Camera.from_rotation(Rz)), [[0.0, 1.0]], atol=1e-15)

    def test_affine_exact_dyadic(self, rng):
        # dyadic points, weights and a signed-permutation rotation keep every
        # product and sum exact, so the identity holds bitwise
        perms = [np.eye(3)[p] * s for p in ([0, 1, 2], [1, 2, 0], [2, 0, 1]) for s in ([1, 1, 1], [-1, -1, 1])]
        for _ in range(100):
            R = perms[rng.integers(len(perms))]
            cam = Camera.from_rotation(R, scale=float(rng.integers(1, 9)) / 4,
                                       translation=rng.integers(-64, 64, 2) / 8)
            X = rng.integers(-256, 256, (5, 3)) / 16
            Y = rng.integers(-256, 256, (5, 3)) / 16
            a = rng.integers(0, 9) / 8
            assert_array_equal(project(a * X + (1 - a) * Y, cam), a * project(X, cam) + (1 - a) * project(Y, cam))

    def test_affine_general(self, rng):
        for _ in range(100):
            cam = Camera.from_rotation(quat.to_matrix(quat.random_uniform(rng)), rng.uniform(0.5, 200),
                                       rng.normal(size=2) * 50)
            X, Y = rng.normal(size=(2, 10, 3))
            a = rng.random()
            assert_allclose(project(a * X + (1 - a) * Y, cam), a * project(X, cam) + (1 - a) * project(Y, cam),
                            atol=1e-11)

    def test_camera_round_trip(self, rng):
        cam = Camera.from_rotation(quat.to_matrix(quat.random_uniform(rng)), 3.5, (1.0, -2.0))
        back = Camera.from_dict(json.loads(json.dumps(cam.to_dict())))
        assert_array_equal(back.r6, cam.r6)
        assert back.scale == cam.scale
