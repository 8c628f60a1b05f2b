"""Markdown run and sweep reports rendered with Jinja2."""

from __future__ import annotations

import logging
import traceback
from pathlib import Path
from typing import Any

from jinja2 import (
    BaseLoader,
    Environment,
    FileSystemLoader,
    PackageLoader,
    StrictUndefined,
    TemplateError,
    TemplateNotFound,
    TemplateSyntaxError,
    UndefinedError,
)

from .core import ErrorDetail, PipelineError

RUN_TEMPLATE = "run_report.md.j2"
SWEEP_TEMPLATE = "sweep_report.md.j2"


def format_number(value: Any, digits: int = 4) -> str:
    """Fixed-point for ordinary magnitudes, scientific otherwise; ``-`` for missing."""
    if value is None:
        return "-"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if value != 0 and not 1e-3 <= abs(value) < 1e6:
        return f"{value:.{digits}e}"
    return f"{value:.{digits}f}"


class ReportTemplates:
    """Renders run and sweep reports.

    Templates ship inside the package; pass ``directory`` to render from a
    different folder instead. Undefined template variables are errors, so a
    report never silently drops a section.

    Attributes:
        env: The Jinja2 environment used for rendering
    """

    def __init__(self, directory: str | Path | None = None) -> None:
        loader: BaseLoader
        if directory is None:
            loader = PackageLoader("deep_sfa", "templates")
        else:
            template_path = Path(directory)
            if not template_path.is_dir():
                raise ValueError(f"Template directory '{directory}' does not exist")
            loader = FileSystemLoader(template_path)
        self.env = Environment(
            loader=loader,
            undefined=StrictUndefined,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["num"] = format_number
        self._logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def _error(self, error_type: str, exc: Exception, template_name: str, **extra: Any) -> PipelineError:
        detail = ErrorDetail(
            error_type=error_type,
            message=str(exc),
            stage="report",
            context={"template": template_name, **extra},
            stack_trace=traceback.format_exc().splitlines(),
        )
        return PipelineError(error=detail)

    def render_safe(self, template_name: str, context: dict[str, Any]) -> tuple[str, PipelineError | None]:
        """Render a template, returning ``("", error)`` instead of raising."""
        try:
            return self.env.get_template(template_name).render(**context), None
        except TemplateNotFound as e:
            return "", self._error("TemplateNotFound", e, template_name)
        except UndefinedError as e:
            return "", self._error("UndefinedVariable", e, template_name, variables=sorted(context))
        except TemplateSyntaxError as e:
            return "", self._error("TemplateSyntaxError", e, template_name, line_number=e.lineno)
        except TemplateError as e:
            return "", self._error("TemplateError", e, template_name)
        except Exception as e:
            return "", self._error(type(e).__name__, e, template_name)

    def _write_output_file(self, content: str, filepath: Path) -> bool:
        """Write rendered content, logging instead of raising on failure."""
        try:
            filepath.parent.mkdir(parents=True, exist_ok=True)
            filepath.write_text(content, encoding="utf-8")
            self._logger.info("Wrote report: %s", filepath)
            return True
        except OSError as e:
            self._logger.error("Failed to write report %s: %s", filepath, e)
            return False

    def write_report(
        self, template_name: str, context: dict[str, Any], path: str | Path
    ) -> tuple[Path | None, PipelineError | None]:
        """Render and write a report; rendering problems come back as errors."""
        content, error = self.render_safe(template_name, context)
        if error is not None:
            self._logger.warning("Report %s not rendered: %s", template_name, error.error.message)
            return None, error
        filepath = Path(path)
        if not self._write_output_file(content, filepath):
            detail = ErrorDetail(error_type="OSError", message=f"could not write {filepath}", stage="report")
            return None, PipelineError(error=detail)
        return filepath, None

    def __repr__(self) -> str:
        return f"ReportTemplates(templates={self.env.list_templates()})"
