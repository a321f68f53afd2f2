from functools import wraps

from hire.utils.errors import HireError
from hire.utils.helpers import log_line


def handle_errors(tag: str):
    """
    Decorator turning raised errors into ({"status": "error", ...}, exit_code) responses.
    """
    def decorator(f):
        @wraps(f)
        def decorated(*args, **kwargs):
            try:
                return f(*args, **kwargs)
            except HireError as e:
                log_line(tag, f"{type(e).__name__}: {e}", "error")
                return {"status": "error", "message": str(e), "error": type(e).__name__}, e.exit_code
            except Exception as e:
                log_line(tag, f"unexpected {type(e).__name__}: {e}", "error")
                return {"status": "error", "message": f"internal error: {e}", "error": "InternalError"}, 1
        return decorated
    return decorator
