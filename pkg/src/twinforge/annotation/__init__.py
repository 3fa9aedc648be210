from twinforge.annotation.client import (
    AnnotationClient,
    AnnotationClientConfig,
    AnnotationError,
    ChatRequest,
    HttpBackend,
    MockBackend,
    MockEntry,
    ReplyParseError,
    TEMPLATE_IDS,
    TransportError,
    backoff_delays,
    bundled_mock,
    load_template,
    parse_reply,
    render_request,
)
from twinforge.annotation.infer import annotate_asset, estimate_physics, infer_articulation, infer_joint_parameters
from twinforge.annotation.views import VIEW_DIRECTIONS, encode_png, render_orthographic_views
from twinforge.assets.articulation import ValidationError

__all__ = [
    "AnnotationClient",
    "AnnotationClientConfig",
    "AnnotationError",
    "ChatRequest",
    "HttpBackend",
    "MockBackend",
    "MockEntry",
    "ReplyParseError",
    "TEMPLATE_IDS",
    "TransportError",
    "ValidationError",
    "VIEW_DIRECTIONS",
    "annotate_asset",
    "backoff_delays",
    "bundled_mock",
    "encode_png",
    "estimate_physics",
    "infer_articulation",
    "infer_joint_parameters",
    "load_template",
    "parse_reply",
    "render_orthographic_views",
    "render_request",
]
