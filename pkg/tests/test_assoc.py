import numpy as np
import pytest

from mcmt.assoc import (
    REASON_BOTH_PASS,
    REASON_EXPANDED,
    REASON_FORCED,
    REASON_TRAJ_FAIL,
    REASON_VIEW_CONFLICT,
    appearance_similarity,
    check_view_uniqueness,
    fm_resolve,
    gide_expand,
    glance_init,
    merge_into_global,
    progressive_associate,
    view_conflict,
)
from mcmt.config import PipelineConfig
from mcmt.core import GlobalTrack, InputError, InternalError, normalize_embedding
from mcmt.geometry import build_trajectory, trajectory_distance

from conftest import DSU, flat_camera, make_tracklet, unit


def cfg_with(**overrides) -> PipelineConfig:
    cfg = PipelineConfig()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg.validate()


def two_cams():
    return {"cam1": flat_camera("cam1"), "cam2": flat_camera("cam2")}


class TestAppearanceSimilarity:
    def test_identical_singletons(self):
        assert appearance_similarity([unit(8, 0)], [unit(8, 0)]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert appearance_similarity([unit(8, 0)], [unit(8, 1)]) == pytest.approx(0.0)

    def test_top_m_mean(self):
        # pairwise sims {1, 0, 0.7071}; top-3 mean = 0.5690
        diag = normalize_embedding(unit(8, 0) + unit(8, 1))
        got = appearance_similarity([unit(8, 0)], [unit(8, 0), unit(8, 1), diag])
        assert got == pytest.approx(0.5690, abs=1e-3)

    def test_caps_at_five_pairs(self):
        a = [unit(8, 0)] * 3
        b = [unit(8, 0)] * 3  # 9 pairs, all 1.0
        assert appearance_similarity(a, b) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            appearance_similarity([], [unit(8, 0)])


class TestMergeIntoGlobal:
    def _global_from(self, t, cal, cfg):
        g = GlobalTrack(global_id=1, class_id=t.class_id)
        traj = build_trajectory(t, cal)
        g.members.append(t.key)
        for f, p in traj.points.items():
            g.frame_points[f] = [p]
            g.trajectory[f] = p
        g.coverage[t.camera_id] = set(t.obs)
        g.feature_pool.extend(t.representatives)
        return g

    def test_disjoint_frames_union(self):
        cfg = cfg_with()
        cams = two_cams()
        a = make_tracklet("cam1", 1, {f: (10.0, 10.0) for f in range(5)}, unit(8, 0))
        b = make_tracklet("cam2", 1, {f: (10.0, 10.0) for f in range(5, 10)}, unit(8, 0))
        g = self._global_from(a, cams["cam1"], cfg)
        merge_into_global(g, b, cams["cam2"], cfg)
        assert sorted(g.trajectory) == list(range(10))

    def test_shared_frames_average(self):
        cfg = cfg_with()
        cams = two_cams()
        a = make_tracklet("cam1", 1, {0: (0.0, 0.0)}, unit(8, 0))
        b = make_tracklet("cam2", 1, {0: (2.0, 0.0)}, unit(8, 0))
        g = self._global_from(a, cams["cam1"], cfg)
        merge_into_global(g, b, cams["cam2"], cfg)
        fused = g.trajectory[0]
        assert (fused.x, fused.y, fused.z) == pytest.approx((1.0, 0.0, 0.0))

    def test_pool_cap_evicts_oldest(self):
        cfg = cfg_with(feature_pool_cap=64)
        cams = two_cams()
        a = make_tracklet("cam1", 1, {0: (10.0, 10.0)}, unit(8, 0))
        a.representatives = [unit(128, i) for i in range(64)]
        g = self._global_from(a, cams["cam1"], cfg)
        b = make_tracklet("cam2", 1, {0: (10.0, 10.0)}, unit(8, 0))
        b.representatives = [unit(128, 64 + i) for i in range(20)]
        merge_into_global(g, b, cams["cam2"], cfg)
        assert len(g.feature_pool) == 64
        # the oldest 20 are gone; the first survivor is basis vector 20
        assert np.array_equal(g.feature_pool[0], unit(128, 20))
        assert np.array_equal(g.feature_pool[-1], unit(128, 83))

    def test_median_fusion_mode(self):
        cfg = cfg_with(fusion="median")
        cams = {f"cam{i}": flat_camera(f"cam{i}") for i in range(1, 4)}
        a = make_tracklet("cam1", 1, {0: (0.0, 0.0)}, unit(8, 0))
        b = make_tracklet("cam2", 1, {0: (1.0, 0.0)}, unit(8, 0))
        c = make_tracklet("cam3", 1, {0: (5.0, 0.0)}, unit(8, 0))  # outlier view
        g = self._global_from(a, cams["cam1"], cfg)
        merge_into_global(g, b, cams["cam2"], cfg)
        merge_into_global(g, c, cams["cam3"], cfg)
        assert g.trajectory[0].x == pytest.approx(1.0)  # median, not mean (= 2.0)

    def test_view_conflict_raises(self):
        cfg = cfg_with()
        cams = two_cams()
        a = make_tracklet("cam1", 1, {f: (10.0, 10.0) for f in range(5)}, unit(8, 0))
        dup = make_tracklet("cam1", 2, {f: (11.0, 10.0) for f in range(3, 8)}, unit(8, 0))
        g = self._global_from(a, cams["cam1"], cfg)
        assert view_conflict(g, dup)
        with pytest.raises(InternalError):
            merge_into_global(g, dup, cams["cam1"], cfg)


def window_pair(app_vec_a=None, app_vec_b=None, offset=0.4):
    """One object seen in two cameras over the glance window."""
    a = make_tracklet(
        "cam1", 1, {f: (50.0 + 0.1 * f, 50.0) for f in range(60)},
        app_vec_a if app_vec_a is not None else unit(8, 0),
    )
    b = make_tracklet(
        "cam2", 1, {f: (50.0 + 0.1 * f + offset, 50.0) for f in range(60)},
        app_vec_b if app_vec_b is not None else unit(8, 0),
    )
    return a, b


class TestGlanceInit:
    def test_two_views_one_object(self):
        a, b = window_pair()
        globals_, assigned, decisions = glance_init([a, b], two_cams(), cfg_with())
        assert len(globals_) == 1
        assert sorted(globals_[0].members) == [("cam1", 1), ("cam2", 1)]
        assert assigned == {("cam1", 1), ("cam2", 1)}
        assert all(d.accepted for d in decisions)

    def test_two_distant_objects_stay_apart(self):
        a = make_tracklet("cam1", 1, {f: (30.0, 30.0) for f in range(60)}, unit(8, 0))
        b = make_tracklet("cam2", 1, {f: (130.0, 130.0) for f in range(60)}, unit(8, 1))
        globals_, _, _ = glance_init([a, b], two_cams(), cfg_with())
        assert len(globals_) == 2

    def test_appearance_gate_blocks_spatial_match(self):
        a, b = window_pair(app_vec_a=unit(8, 0), app_vec_b=unit(8, 1))
        globals_, _, _ = glance_init([a, b], two_cams(), cfg_with())
        assert len(globals_) == 2  # trajectories agree but appearance fails

    def test_single_camera_one_global_per_tracklet(self):
        ts = [
            make_tracklet("cam1", i, {f: (20.0 * i, 30.0) for f in range(40)}, unit(8, i))
            for i in range(1, 4)
        ]
        globals_, assigned, _ = glance_init(ts, {"cam1": flat_camera("cam1")}, cfg_with())
        assert len(globals_) == 3
        assert len(assigned) == 3

    def test_tracklets_outside_window_excluded(self):
        late = make_tracklet("cam1", 9, {f: (10.0, 10.0) for f in range(150, 200)}, unit(8, 0))
        globals_, assigned, _ = glance_init([late], two_cams(), cfg_with(glance_window=100))
        assert globals_ == [] and assigned == set()

    def test_global_trajectory_extends_past_window(self):
        a = make_tracklet("cam1", 1, {f: (50.0, 50.0) for f in range(180)}, unit(8, 0))
        globals_, _, _ = glance_init([a], two_cams(), cfg_with(glance_window=100))
        assert globals_[0].end == 179

    def test_components_match_union_find_oracle(self, rng):
        # independent oracle: recompute the acceptance edges with the public
        # scoring primitives and run union-find over them
        cfg = cfg_with()
        cams = {f"cam{i}": flat_camera(f"cam{i}") for i in range(1, 4)}
        ts = []
        positions = [(30.0, 30.0), (90.0, 90.0), (150.0, 40.0)]
        for c, cam in enumerate(sorted(cams)):
            for o, (x, y) in enumerate(positions):
                if rng.random() < 0.3:
                    continue  # not every object seen from every camera
                ts.append(
                    make_tracklet(
                        cam, o + 1,
                        {f: (x + 0.05 * f + float(rng.normal(0, 0.05)), y) for f in range(60)},
                        unit(8, o),
                    )
                )
        globals_, _, _ = glance_init(ts, cams, cfg)

        ordered = sorted(ts, key=lambda t: t.key)
        dsu = DSU(len(ordered))
        trajs = [build_trajectory(t, cams[t.camera_id]) for t in ordered]
        for i in range(len(ordered)):
            for j in range(i + 1, len(ordered)):
                a, b = ordered[i], ordered[j]
                if a.camera_id == b.camera_id or a.class_id != b.class_id:
                    continue
                shared, dist = trajectory_distance(trajs[i], trajs[j])
                if shared < cfg.min_shared or dist > cfg.tau_traj:
                    continue
                if appearance_similarity(a.representatives, b.representatives) < cfg.tau_app:
                    continue
                dsu.union(i, j)
        oracle = {
            frozenset(ordered[i].key for i in group) for group in dsu.groups()
        }
        got = {frozenset(g.members) for g in globals_}
        assert got == oracle


class TestProgressive:
    def test_merge_extends_trajectory(self):
        cfg = cfg_with()
        cams = two_cams()
        base = make_tracklet("cam1", 1, {f: (50.0 + 0.2 * f, 50.0) for f in range(51)}, unit(8, 0))
        globals_, assigned, _ = glance_init([base], cams, cfg)
        late = make_tracklet(
            "cam2", 7, {f: (50.0 + 0.2 * f + 0.3, 50.0) for f in range(30, 81)}, unit(8, 0)
        )
        globals_, decisions = progressive_associate(globals_, [late], cams, cfg, "GIDE")
        assert len(globals_) == 1
        assert globals_[0].end == 80
        accept = [d for d in decisions if d.accepted and d.local_id == 7]
        assert accept[0].reason == REASON_BOTH_PASS

    def test_per_view_conflict_rejected(self):
        cfg = cfg_with()
        cams = two_cams()
        a, b = window_pair()
        globals_, assigned, _ = glance_init([a, b], cams, cfg)
        # same camera as member b, overlapping frames, right next to the global
        clone = make_tracklet("cam2", 5, {f: (50.0 + 0.1 * f + 0.5, 50.0) for f in range(40, 60)}, unit(8, 0))
        globals_, decisions = progressive_associate(globals_, [clone], cams, cfg, "GIDE")
        rejected = [d for d in decisions if d.local_id == 5 and not d.accepted]
        assert rejected and rejected[0].reason == REASON_VIEW_CONFLICT
        # GIDE then gives it a fresh identity
        assert len(globals_) == 2

    def test_trajectory_gate_requires_both_criteria(self):
        cfg = cfg_with()
        cams = two_cams()
        base = make_tracklet("cam1", 1, {f: (50.0, 50.0) for f in range(60)}, unit(8, 0))
        globals_, _, _ = glance_init([base], cams, cfg)
        # same appearance, 8 m away: must fail on trajectory
        far = make_tracklet("cam2", 2, {f: (58.0, 50.0) for f in range(20, 70)}, unit(8, 0))
        globals_, decisions = progressive_associate(globals_, [far], cams, cfg, "GIDE")
        rejections = [d for d in decisions if d.local_id == 2 and not d.accepted]
        assert rejections[0].reason == REASON_TRAJ_FAIL
        assert len(globals_) == 2


class TestForcedMatching:
    def test_prefers_temporal_then_spatial(self):
        cfg = cfg_with()
        cams = two_cams()
        near = make_tracklet("cam1", 1, {f: (50.0, 50.0) for f in range(40)}, unit(8, 0))
        far = make_tracklet("cam1", 2, {f: (120.0, 120.0) for f in range(120, 160)}, unit(8, 1))
        globals_, _, _ = glance_init([near, far], cams, cfg_with(glance_window=200))
        # leftover adjacent in time, 0.5 m from `near`; 10+ m and 80 frames from `far`
        leftover = make_tracklet("cam2", 3, {f: (50.5, 50.0) for f in range(41, 70)}, unit(8, 2))
        decisions = fm_resolve(globals_, [leftover], cams, cfg)
        assert decisions[0].accepted and decisions[0].reason == REASON_FORCED
        near_gid = next(g.global_id for g in globals_ if ("cam1", 1) in g.members)
        assert decisions[0].global_id == near_gid

    def test_conflict_everywhere_creates_fresh_id(self):
        cfg = cfg_with()
        cams = two_cams()
        a = make_tracklet("cam1", 1, {f: (50.0, 50.0) for f in range(60)}, unit(8, 0))
        globals_, _, _ = glance_init([a], cams, cfg)
        # same camera and overlapping frames as the only global: cannot force
        clash = make_tracklet("cam1", 2, {f: (80.0, 80.0) for f in range(30, 50)}, unit(8, 1))
        decisions = fm_resolve(globals_, [clash], cams, cfg)
        assert decisions[0].accepted and decisions[0].reason == REASON_EXPANDED
        assert len(globals_) == 2

    def test_empty_leftovers_noop(self):
        cfg = cfg_with()
        cams = two_cams()
        a, b = window_pair()
        globals_, _, _ = glance_init([a, b], cams, cfg)
        assert fm_resolve(globals_, [], cams, cfg) == []
        assert len(globals_) == 1


class TestGideExpansion:
    def test_single_leftover_promoted(self):
        cfg = cfg_with()
        cams = two_cams()
        leftover = make_tracklet("cam1", 1, {f: (150.0, 150.0) for f in range(200, 240)}, unit(8, 3))
        globals_, decisions = gide_expand([], [leftover], cams, cfg)
        assert len(globals_) == 1
        assert globals_[0].members == [("cam1", 1)]
        assert decisions[0].reason == REASON_EXPANDED

    def test_colocated_pair_shares_new_identity(self):
        cfg = cfg_with()
        cams = two_cams()
        a = make_tracklet("cam1", 1, {f: (60.0, 60.0) for f in range(200, 260)}, unit(8, 3))
        b = make_tracklet("cam2", 2, {f: (60.3, 60.0) for f in range(205, 255)}, unit(8, 3))
        globals_, decisions = gide_expand([], [a, b], cams, cfg)
        assert len(globals_) == 1  # longest promoted, the other attaches
        assert sorted(globals_[0].members) == [("cam1", 1), ("cam2", 2)]

    def test_unrelated_leftovers_each_get_identity(self):
        cfg = cfg_with()
        cams = two_cams()
        ts = [
            make_tracklet("cam1", 1, {f: (30.0, 30.0) for f in range(0, 40)}, unit(8, 1)),
            make_tracklet("cam1", 2, {f: (120.0, 120.0) for f in range(100, 140)}, unit(8, 2)),
            make_tracklet("cam2", 3, {f: (60.0, 160.0) for f in range(200, 240)}, unit(8, 3)),
        ]
        globals_, _ = gide_expand([], ts, cams, cfg)
        assert len(globals_) == 3


def build_random_scene_tracklets(rng, cams, n_objects=4, frames=80):
    """Random multi-view tracklets with known object ownership."""
    ts = []
    owner = {}
    lid = 0
    for o in range(n_objects):
        x0, y0 = float(rng.uniform(20, 180)), float(rng.uniform(20, 180))
        vx, vy = float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3))
        for cam in sorted(cams):
            if rng.random() < 0.25:
                continue
            lid += 1
            start = int(rng.integers(0, 30))
            end = int(rng.integers(start + 20, frames))
            pos = {
                f: (
                    min(195.0, max(5.0, x0 + vx * f + float(rng.normal(0, 0.05)))),
                    min(195.0, max(5.0, y0 + vy * f + float(rng.normal(0, 0.05)))),
                )
                for f in range(start, end)
            }
            t = make_tracklet(cam, lid, pos, unit(8, o))
            ts.append(t)
            owner[t.key] = o
    return ts, owner


class TestPipelineInvariants:
    @pytest.mark.parametrize("strategy", ["FM", "GIDE"])
    def test_completeness_and_uniqueness(self, rng, strategy):
        cfg = cfg_with(glance_window=40)
        cams = {f"cam{i}": flat_camera(f"cam{i}") for i in range(1, 4)}
        for _ in range(10):
            ts, _ = build_random_scene_tracklets(rng, cams)
            globals_, assigned, _ = glance_init(ts, cams, cfg)
            rest = [t for t in ts if t.key not in assigned]
            globals_, _ = progressive_associate(globals_, rest, cams, cfg, strategy)
            memberships = [key for g in globals_ for key in g.members]
            assert sorted(memberships) == sorted(t.key for t in ts)
            check_view_uniqueness(globals_, {t.key: t for t in ts})

    def test_determinism(self, rng):
        cfg = cfg_with(glance_window=40)
        cams = {f"cam{i}": flat_camera(f"cam{i}") for i in range(1, 4)}
        ts, _ = build_random_scene_tracklets(rng, cams)

        def run():
            globals_, assigned, _ = glance_init(ts, cams, cfg)
            rest = [t for t in ts if t.key not in assigned]
            globals_, decisions = progressive_associate(globals_, rest, cams, cfg, "GIDE")
            return [(g.global_id, sorted(g.members)) for g in globals_], decisions

        a_globals, a_dec = run()
        b_globals, b_dec = run()
        assert a_globals == b_globals
        assert a_dec == b_dec

    def test_strategy_containment(self, rng):
        cfg = cfg_with(glance_window=40)
        cams = {f"cam{i}": flat_camera(f"cam{i}") for i in range(1, 3)}
        for _ in range(10):
            ts, _ = build_random_scene_tracklets(rng, cams, n_objects=3)
            g0, assigned, _ = glance_init(ts, cams, cfg)
            n_glance = len(g0)
            rest = [t for t in ts if t.key not in assigned]
            gide_globals, _ = progressive_associate(g0, rest, cams, cfg, "GIDE")
            assert len(gide_globals) >= n_glance
            # FM run on a fresh pipeline: fresh ids only via conflict fallback
            g1, assigned1, _ = glance_init(ts, cams, cfg)
            rest1 = [t for t in ts if t.key not in assigned1]
            fm_globals, fm_dec = progressive_associate(g1, rest1, cams, cfg, "FM")
            n_fallbacks = sum(
                1 for d in fm_dec if d.accepted and d.reason == REASON_EXPANDED
            )
            assert len(fm_globals) == len(g0) + n_fallbacks
