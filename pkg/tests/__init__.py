"""
deep_sfa Test Suite

Tests mirror the package layout under tests/deep_sfa/, one module per
package module, grouped into Test* classes.

Pytest Markers:
- @pytest.mark.unit: Unit tests (fast, isolated)
- @pytest.mark.integration: Pipeline and CLI tests that touch the filesystem
- @pytest.mark.slow: Long-running tests (full DSFA training)
- @pytest.mark.e2e: End-to-end acceptance on synthetic scenes

Usage:
    # Run all tests
    pytest

    # Run only fast unit tests
    pytest -m unit

    # Skip slow tests
    pytest -m "not slow"

    # Run with coverage
    pytest --cov=deep_sfa

    # Run specific test file
    pytest tests/deep_sfa/test_geneig.py
"""

# Test configuration paths - relative to project root
PACKAGE_TEMPLATES_DIR = "src/deep_sfa/templates"
