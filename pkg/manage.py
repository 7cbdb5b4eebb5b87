#!/usr/bin/env python3
'''Command-line entry point: `./manage.py run_all --config config/experiment.yaml`.'''
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "styleforge.settings.dev")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        # Only translate the error if Django itself is the missing piece, so
        # that other import failures are not masked.
        try:
            import django  # noqa: F401
        except ImportError:
            raise ImportError(
                "Couldn't import Django. Install requirements.txt into the "
                "active environment before running pipeline commands."
            ) from exc
        raise
    execute_from_command_line(sys.argv)
