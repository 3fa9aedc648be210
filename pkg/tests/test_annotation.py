import json
import math
import threading
import time
from pathlib import Path

import httpx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twinforge.annotation import (
    AnnotationClient,
    AnnotationClientConfig,
    AnnotationError,
    HttpBackend,
    MockBackend,
    ReplyParseError,
    TransportError,
    ValidationError,
    annotate_asset,
    backoff_delays,
    bundled_mock,
    estimate_physics,
    infer_articulation,
    infer_joint_parameters,
    render_orthographic_views,
    render_request,
)
from twinforge.assets import ArticulationProposal, build_urdf, read_articulation
from twinforge.assets.mesh import box_mesh, icosphere
from twinforge.fixtures import toy_cabinet
from twinforge.kinematics import parse_urdf

GOLDEN = Path(__file__).parent / "golden"
VIEWS = [np.full((8, 8, 3), 255, np.uint8)] * 4
CABINET = ArticulationProposal("cabinet", "prismatic", ("drawer body", "main cabinet"))
BOUNDS = ((np.array([0.15, -0.12, 0.15]), np.array([0.2, 0.12, 0.25])), (np.array([-0.15, -0.15, 0.0]), np.array([0.15, 0.15, 0.3])))


def _client(template, reply):
    return AnnotationClient(MockBackend.from_json([{"template": template, "match": "", "reply": reply}]))


def _silhouette(img):
    ys, xs = np.nonzero((img != 255).any(axis=-1))
    return xs.max() - xs.min() + 1, ys.max() - ys.min() + 1, (xs.min() + xs.max()) / 2, (ys.min() + ys.max()) / 2


# --- views ---------------------------------------------------------------


def test_cube_views_are_centered_squares():
    views = render_orthographic_views(box_mesh((1, 1, 1)), 128)
    assert list(views) == ["+x", "-x", "+y", "+z"]
    for img in views.values():
        w, h, cx, cy = _silhouette(img)
        assert w == h
        assert abs(cx - 63.5) <= 0.5 and abs(cy - 63.5) <= 0.5
        # margin: the silhouette fills 1 / 1.2 of the frame
        assert abs(w - 128 / 1.2) <= 1.5


def test_views_deterministic():
    mesh = icosphere(0.3, 2)
    a = render_orthographic_views(mesh, 96)
    b = render_orthographic_views(mesh, 96)
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_elongated_box_aspect_ratios():
    views = render_orthographic_views(box_mesh((2, 1, 1)), 256)
    # analytic projection: +x sees the y-z face (1 x 1), +y sees x-z (2 x 1), +z sees x-y (2 x 1)
    for name, expected in (("+x", 1.0), ("-x", 1.0), ("+y", 2.0), ("+z", 2.0)):
        w, h, _, _ = _silhouette(views[name])
        assert abs(w / h - expected) / expected < 0.02


def test_views_reject_empty_mesh():
    with pytest.raises(ValueError, match="empty"):
        render_orthographic_views(box_mesh().select_faces(np.zeros(12, bool)))


# --- articulation ---------------------------------------------------------


def test_mock_cabinet_passthrough():
    client = AnnotationClient(
        MockBackend.from_json(
            [{"template": "articulation", "match": "cabinet", "reply": {"joint_type": "prismatic", "parts": ["drawer body", "main cabinet"]}}]
        )
    )
    p = infer_articulation(VIEWS, client, hint="cabinet")
    assert p == ArticulationProposal("cabinet", "prismatic", ("drawer body", "main cabinet"))


def test_unknown_joint_type_rejected():
    with pytest.raises(ValidationError) as err:
        infer_articulation(VIEWS, _client("articulation", {"category": "x", "joint_type": "ball", "parts": ["a", "b"]}))
    assert err.value.field == "joint_type"


def test_none_joint_requires_empty_parts():
    with pytest.raises(ValidationError, match="empty"):
        infer_articulation(VIEWS, _client("articulation", {"category": "x", "joint_type": "none", "parts": ["a", "b"]}))
    p = infer_articulation(VIEWS, _client("articulation", {"category": "mug", "joint_type": "none", "parts": []}))
    assert p.part_labels == ()


@pytest.mark.parametrize("raw", ["not json", "[1, 2]", '{"a": NaN}', "```json\n{}\n```"])
def test_reply_parse_errors(raw):
    with pytest.raises(ReplyParseError):
        infer_articulation(VIEWS, _client("articulation", raw))


def test_missing_fixture():
    with pytest.raises(AnnotationError, match="no mock fixture"):
        infer_articulation(VIEWS, AnnotationClient(MockBackend([])))


# --- joint parameters -----------------------------------------------------


def test_axis_normalized():
    spec = infer_joint_parameters(VIEWS, CABINET, BOUNDS, _client("joint_parameters", {"axis": [0, 0, 2], "origin": [0, 0, 0], "limits": [0, 0.2]}))
    np.testing.assert_array_equal(spec.axis, [0, 0, 1])
    assert (spec.mobile_label, spec.base_label) == ("drawer body", "main cabinet")


def test_limit_order_and_zero_axis():
    with pytest.raises(ValidationError, match="limit order"):
        infer_joint_parameters(VIEWS, CABINET, BOUNDS, _client("joint_parameters", {"axis": [1, 0, 0], "origin": [0, 0, 0], "limits": [0.4, 0.0]}))
    with pytest.raises(ValidationError, match="zero-norm"):
        infer_joint_parameters(VIEWS, CABINET, BOUNDS, _client("joint_parameters", {"axis": [0, 0, 0], "origin": [0, 0, 0], "limits": [0, 1]}))
    with pytest.raises(ValidationError) as err:
        infer_joint_parameters(VIEWS, CABINET, BOUNDS, _client("joint_parameters", {"axis": [1, 0], "origin": [0, 0, 0], "limits": [0, 1]}))
    assert err.value.field == "axis"


def test_mock_drawer_roundtrips_through_urdf():
    asset, proposal = annotate_asset(toy_cabinet(), "toy cabinet", AnnotationClient(bundled_mock()))
    assert proposal.joint_type == "prismatic"
    spec, masses = read_articulation(parse_urdf(build_urdf(asset, "cabinet")))
    assert spec.close_to(asset.articulation, 1e-6)
    for label, props in asset.mass.items():
        assert masses[label].mass == pytest.approx(props.mass, abs=1e-6)


# --- physics --------------------------------------------------------------


def test_physics_errors_name_field():
    with pytest.raises(ValidationError, match=r"\(-1, 0.5\)") as err:
        estimate_physics(VIEWS, "cabinet", _client("physics", {"density": 600, "youngs_modulus": 1e9, "poisson_ratio": 0.7}))
    assert err.value.field == "poisson_ratio"
    with pytest.raises(ValidationError) as err:
        estimate_physics(VIEWS, "cabinet", _client("physics", {"density": -5, "youngs_modulus": 1e9, "poisson_ratio": 0.3}))
    assert err.value.field == "density"
    with pytest.raises(ValidationError) as err:
        estimate_physics(VIEWS, "cabinet", _client("physics", {"density": 5, "youngs_modulus": "1e9", "poisson_ratio": 0.3}))
    assert err.value.field == "youngs_modulus"


def _valid_physics(d):
    def num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

    return (
        all(num(d.get(k)) for k in ("density", "youngs_modulus", "poisson_ratio"))
        and d["density"] > 0
        and d["youngs_modulus"] > 0
        and -1 < d["poisson_ratio"] < 0.5
    )


values = st.one_of(
    st.floats(-10, 1e11, allow_nan=False, allow_infinity=False),
    st.floats(-1.5, 1.0, allow_nan=False),
    st.integers(-5, 5000),
    st.booleans(),
    st.text(max_size=3),
    st.none(),
)


@settings(max_examples=200, deadline=None)
@given(st.fixed_dictionaries({}, optional={"density": values, "youngs_modulus": values, "poisson_ratio": values}))
def test_physics_fuzz(reply):
    client = _client("physics", reply)
    if _valid_physics(reply):
        p = estimate_physics(VIEWS, "thing", client)
        assert (p.density, p.youngs_modulus, p.poisson_ratio) == (reply["density"], reply["youngs_modulus"], reply["poisson_ratio"])
    else:
        with pytest.raises(ValidationError):
            estimate_physics(VIEWS, "thing", client)


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(
    axis=st.lists(finite, min_size=2, max_size=4),
    origin=st.lists(finite, min_size=3, max_size=3),
    limits=st.lists(finite, min_size=2, max_size=2),
)
def test_joint_fuzz(axis, origin, limits):
    client = _client("joint_parameters", {"axis": axis, "origin": origin, "limits": limits})
    norm = float(np.linalg.norm(axis))
    if len(axis) == 3 and norm > 0 and limits[0] <= limits[1]:
        spec = infer_joint_parameters(VIEWS, CABINET, BOUNDS, client)
        assert abs(np.linalg.norm(spec.axis) - 1) < 1e-12
        np.testing.assert_allclose(spec.axis, np.array(axis) / norm, rtol=0, atol=1e-15)
        assert list(spec.origin) == origin and [spec.limit_lower, spec.limit_upper] == limits
    else:
        with pytest.raises(ValidationError):
            infer_joint_parameters(VIEWS, CABINET, BOUNDS, client)


# --- transport ------------------------------------------------------------


def _ok(content='{"category": "mug", "joint_type": "none", "parts": []}'):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def _http(handler, monkeypatch, **cfg):
    monkeypatch.setenv("TEST_KEY", "secret")
    sleeps = []
    backend = HttpBackend(AnnotationClientConfig(api_key_env="TEST_KEY", **cfg), httpx.MockTransport(handler), sleeps.append)
    return AnnotationClient(backend), sleeps


def test_timeout_retry_contract(monkeypatch):
    calls = []

    def handler(request):
        calls.append(request)
        raise httpx.ReadTimeout("slow", request=request)

    client, sleeps = _http(handler, monkeypatch, max_retries=2)
    with pytest.raises(TransportError) as err:
        infer_articulation(VIEWS, client)
    assert len(calls) == 3 and err.value.attempts == 3
    assert len(sleeps) == 2 and sleeps == sorted(sleeps)


def test_retry_then_success(monkeypatch):
    codes = iter([503, 429, 200])

    def handler(request):
        code = next(codes)
        assert request.headers["authorization"] == "Bearer secret"
        return _ok() if code == 200 else httpx.Response(code)

    client, sleeps = _http(handler, monkeypatch, max_retries=3)
    assert infer_articulation(VIEWS, client).category == "mug"
    assert sleeps == [1.0, 2.0]


def test_client_error_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    client, _ = _http(handler, monkeypatch, max_retries=5)
    with pytest.raises(TransportError, match="401"):
        infer_articulation(VIEWS, client)
    assert len(calls) == 1


def test_missing_credential(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    client = AnnotationClient(HttpBackend(AnnotationClientConfig(api_key_env="NOPE_KEY")))
    with pytest.raises(AnnotationError, match="NOPE_KEY"):
        infer_articulation(VIEWS, client)


def test_bad_envelope(monkeypatch):
    client, _ = _http(lambda r: httpx.Response(200, json={"id": 1}), monkeypatch)
    with pytest.raises(ReplyParseError, match="envelope"):
        infer_articulation(VIEWS, client)


@settings(max_examples=50, deadline=None)
@given(retries=st.integers(0, 8), initial=st.floats(0, 5), cap=st.floats(0, 60))
def test_backoff_non_decreasing_and_bounded(retries, initial, cap):
    if cap < initial:
        with pytest.raises(ValueError):
            AnnotationClientConfig(max_retries=retries, backoff_initial=initial, backoff_max=cap)
        return
    d = backoff_delays(AnnotationClientConfig(max_retries=retries, backoff_initial=initial, backoff_max=cap))
    assert len(d) == retries
    assert all(b >= a for a, b in zip(d, d[1:]))
    assert all(x <= cap for x in d)


def test_in_flight_bound(monkeypatch):
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return _ok()

    client, _ = _http(handler, monkeypatch, max_in_flight=2)
    threads = [threading.Thread(target=infer_articulation, args=(VIEWS, client)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert 1 <= state["peak"] <= 2


def test_config_validation():
    with pytest.raises(ValueError):
        AnnotationClientConfig(max_retries=-1)
    with pytest.raises(ValueError):
        AnnotationClientConfig(timeout=0)


# --- golden request bodies ------------------------------------------------


def _scrub(body):
    for msg in body["messages"]:
        if isinstance(msg["content"], list):
            for part in msg["content"]:
                if part["type"] == "image_url":
                    part["image_url"]["url"] = "data:image/png;base64,<payload>"
    return body


GOLDEN_REQUESTS = {
    "articulation": dict(hint="toy cabinet", labels='"drawer body", "main cabinet"'),
    "joint_parameters": dict(
        category="cabinet", mobile="drawer body", base="main cabinet", joint_type="prismatic",
        mobile_bounds="[[0.15, -0.12, 0.15], [0.2, 0.12, 0.25]]", base_bounds="[[-0.15, -0.15, 0], [0.15, 0.15, 0.3]]",
    ),
    "physics": dict(category="cabinet"),
}  # fmt: skip


@pytest.mark.parametrize("template", sorted(GOLDEN_REQUESTS))
def test_request_body_golden(template):
    body = _scrub(render_request(template, [b"png"] * 4, **GOLDEN_REQUESTS[template]).body("vision-model"))
    expected = json.loads((GOLDEN / f"{template}.json").read_text())
    assert body == expected


def test_pipeline_prompt_fields_match_golden():
    # the prompts built from the toy cabinet use the same field values as the golden files
    backend = bundled_mock()
    annotate_asset(toy_cabinet(), "toy cabinet", AnnotationClient(backend))
    for request in backend.requests:
        expected = render_request(request.template, [], **GOLDEN_REQUESTS[request.template]).prompt
        assert request.prompt == expected
