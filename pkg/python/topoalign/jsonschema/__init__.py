from __future__ import annotations  # required for |-operator in typing

__all__ = [
           "schemas",
           "validate",
           "ValidationError",
           "SCHEMA_NAMES",
           "VERSIONS_AVAILABLE",
           ]

import json
import os
from packaging import version

import jsonschema
from jsonschema.validators import Draft202012Validator
from jsonschema.exceptions import ValidationError

_DIR = os.path.dirname(os.path.abspath(__file__))
_PREFIX = "TopoAlign."
_SUFFIX = ".schema.json"

SCHEMA_NAMES = ("dataset", "metrics", "config")

schemas = {name: {} for name in SCHEMA_NAMES}
"""dict: Dictionary containing all available schemas by name and version.

:meta hide-value:
"""


def _location(exception: ValidationError) -> str:
    path = [str(p) for p in exception.absolute_path]
    return "/".join(path) if path else "<record>"


def _translate_validation_error(exception: ValidationError,
                                schema_name: str):
    """Translate a jsonschema validation exception to a user friendly error
    message.

    This simply overwrites the `message` attribute of the exception.

    Args:
        exception: The exception thrown by the jsonschema library.
        schema_name: Name of the schema which failed.

    Raises:
        jsonschema.exceptions.ValidationError: Modified exception.
    """
    where = _location(exception)
    if exception.validator == "required":
        exception.message = exception.message + " in " + schema_name +\
                            " record."
    elif exception.validator == "enum":
        exception.message = "Value of '" + where + "' in " + schema_name +\
                            " record is not allowed: " + exception.message +\
                            "."
    elif exception.validator == "type":
        exception.message = "Value of '" + where + "' in " + schema_name +\
                            " record has the wrong type: " +\
                            exception.message + "."
    elif exception.validator == "pattern":
        exception.message = "Value of '" + where + "' in " + schema_name +\
                            " record has the wrong format: "
        if "patternErrorMessage" in exception.schema:
            exception.message += exception.schema["patternErrorMessage"]
        else:
            exception.message += exception.message + "."
    else:
        exception.message = "Value of '" + where + "' in " + schema_name +\
                            " record is invalid: " + exception.message + "."

    raise exception


def validate(instance: dict,
             schema_name: str,
             schema_version: str | None = None,
             translate: bool = True):
    """Validate a record against one of the package schemas.

        Args:
            instance: Record dictionary.
            schema_name: "dataset", "metrics" or "config".
            schema_version: Schema version. Defaults to the latest one.
            translate: If true, replace the error message with more user
                friendly messages.

        Raises:
            jsonschema.exceptions.ValidationError: Exception with details about
                the problem of the validated dictionary.
    """

    if schema_name not in schemas:
        raise KeyError("Unknown schema '%s'!" % schema_name)
    if schema_version is None:
        schema_version = VERSIONS_AVAILABLE[-1]
    schema = schemas[schema_name][schema_version]

    try:
        jsonschema.validate(schema=schema,
                            instance=instance,
                            cls=Draft202012Validator)
    except ValidationError as e:
        if translate:
            _translate_validation_error(e, schema_name)
        else:
            raise


VERSIONS_AVAILABLE = []

for filename in os.listdir(_DIR):
    if not (filename.startswith(_PREFIX) and filename.endswith(_SUFFIX)):
        continue
    name, modelVersion = filename[len(_PREFIX):-len(_SUFFIX)].split(".", 1)
    if name not in schemas:
        continue
    if modelVersion not in VERSIONS_AVAILABLE:
        VERSIONS_AVAILABLE.append(modelVersion)
    with open(os.path.join(_DIR, filename), "r") as schema_file:
        schemas[name][modelVersion] = json.loads(schema_file.read())
        Draft202012Validator.check_schema(schemas[name][modelVersion])

VERSIONS_AVAILABLE.sort(key=version.parse)
