"""License, version, and attribution helpers for the CLI."""

from __future__ import annotations

from importlib import metadata

PACKAGE_NAME = "mixedeig"
LICENSE_NAME = "GPL-3.0-or-later"

THIRD_PARTY_LIBRARIES = [
    ("numpy", "BSD-3-Clause", "https://numpy.org/"),
    ("scipy", "BSD-3-Clause", "https://scipy.org/"),
    ("pandas", "BSD-3-Clause", "https://pandas.pydata.org/"),
]


def get_version() -> str:
    """Return the installed package version using importlib metadata."""
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


def format_about_text() -> str:
    """Return a human-readable about/attribution message."""
    version = get_version()
    third_party_lines = "\n".join(
        f"  - {name}: {license_name} ({url})"
        for name, license_name, url in THIRD_PARTY_LIBRARIES
    )
    return (
        f"mixedeig {version}\n"
        f"License: {LICENSE_NAME}\n"
        "\n"
        "Mixed finite element Laplace eigensolver with post-processing and\n"
        "asymptotically exact a posteriori error estimators.\n"
        "\n"
        "Third-party Python dependencies:\n"
        f"{third_party_lines}\n"
        "\n"
        "See NOTICE.md and THIRD_PARTY_LICENSES.md for the complete text of these notices.\n"
        "Refer to https://www.gnu.org/licenses/gpl-3.0.html for the full GPL terms."
    )
