##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the base data conversion class AbstractFile and
# the conversion classes of all run archive items. All data conversion
# classes inherit from AbstractFile and must provide three methods:
#
# encode(): Return data encoded as bytes string.
# decode(data): Decode and store given bytes string data.
# hash(): Return SHA256 hash from data as hex string.
#
# The hash implementation should make sure that semantically equivalent
# data results in the same hash.
#
# Weight files (.tawt) start with a header
#
#     b"TAWT" | uint8 version length | version (ascii) | uint32 count
#     count x (uint16 name length | name (utf8) | uint32 rows | uint32 cols)
#
# followed by the row-major parameter data as little-endian float64
# values in header order. All integers are little-endian.
#
##########################################################################

import csv
import hashlib
import io
import json
import struct
import typing
from abc import ABC, abstractmethod

import numpy as np
from packaging import version

from .errors import ParseError
from .numcore import ParamStore
from .textmetric import Vocabulary

WEIGHTS_MAGIC = b"TAWT"
WEIGHTS_VERSION = "1.0"


##########################################################################
# Data conversion classes


class AbstractFile(ABC):
    """Base class for converting datatypes to their file representation."""

    def __init__(self, data):
        """Constructor to create an instance of the converter class."""
        if isinstance(data, bytes):
            self.decode(data)
        else:
            self.data = data

    def hash(self) -> str:
        """Return hex digest of SHA256 hash.

        Returns:
            str: Hex digest of this object as string.
        """
        return hashlib.sha256(self.encode()).hexdigest()

    @abstractmethod
    def encode(self) -> bytes:
        """Encode the item content to bytes.

        Returns:
            bytes: Byte string representation of the object.
        """
        pass  # pragma: no cover

    @abstractmethod
    def decode(self, data: bytes):
        """Decode the item content from bytes."""
        pass  # pragma: no cover


class TextFile(AbstractFile):
    """Data conversion class for a text file."""

    charset = "utf8"
    """charset (str): Character encoding used for translation from text to\
                      bytes."""

    def encode(self) -> bytes:
        return bytes(self.data, self.charset)

    def decode(self, data: bytes):
        self.data = data.decode(self.charset)


def _sortit(data: typing.Union[dict, list, tuple]) -> str:
    """Return compact string representation with keys of all
    sub-dictionaries sorted."""
    if isinstance(data, dict):
        keys = sorted(data.keys())
        return "{" + ", ".join(k + ": " + _sortit(data[k]) for k in keys) + "}"
    if isinstance(data, (list, tuple)):
        return "[" + ", ".join(_sortit(v) for v in data) + "]"
    return repr(data)


class JsonFile(AbstractFile):

    """Data conversion class for a JSON file represented as Python
    dictionary."""

    indent = 4
    """indent (int): Indentation of exported JSON files."""
    charset = "utf8"

    def hash(self) -> str:
        """Return hex digest of the SHA256 hash calculated from the
        sorted compact representation. This results in the same hash for
        semantically equal data dictionaries."""
        return hashlib.sha256(bytes(_sortit(self.data),
                                    self.charset)).hexdigest()

    def encode(self) -> bytes:
        data = json.dumps(
            self.data, sort_keys=True, indent=self.indent, ensure_ascii=False
        )
        return bytes(data + "\n", self.charset)

    def decode(self, data: bytes):
        try:
            self.data = json.loads(data.decode(self.charset))
        except json.JSONDecodeError as error:
            raise ParseError("Invalid JSON data: %s!" % error.msg,
                             line=error.lineno)


class JsonLinesFile(AbstractFile):
    """Data conversion class for a list of records stored one compact JSON
    object per line."""

    charset = "utf8"

    def encode(self) -> bytes:
        lines = [json.dumps(r, sort_keys=True, separators=(",", ":"),
                            ensure_ascii=False) + "\n" for r in self.data]
        return bytes("".join(lines), self.charset)

    def decode(self, data: bytes):
        records = []
        for number, line in enumerate(data.decode(self.charset).split("\n"),
                                      start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as error:
                raise ParseError("Line %d: %s!" % (number, error.msg),
                                 line=number)
        self.data = records


class CsvFile(AbstractFile):
    """Data conversion class for a table given as list of rows. The first
    row is the header."""

    charset = "utf8"

    def encode(self) -> bytes:
        fp = io.StringIO()
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerows(self.data)
        return bytes(fp.getvalue(), self.charset)

    def decode(self, data: bytes):
        fp = io.StringIO(data.decode(self.charset))
        self.data = [row for row in csv.reader(fp)]


class VocabFile(AbstractFile):
    """Data conversion class for a Vocabulary stored one token per line."""

    charset = "utf8"

    def encode(self) -> bytes:
        return bytes(self.data.dumps(), self.charset)

    def decode(self, data: bytes):
        self.data = Vocabulary.loads(data.decode(self.charset))


class WeightsFile(AbstractFile):
    """Data conversion class for the parameters of a ParamStore."""

    def encode(self) -> bytes:
        v = WEIGHTS_VERSION.encode("ascii")
        header = [WEIGHTS_MAGIC, struct.pack("<B", len(v)), v,
                  struct.pack("<I", len(self.data))]
        body = []
        for name, p in self.data.items():
            raw = name.encode("utf8")
            header.append(struct.pack("<H", len(raw)) + raw)
            header.append(struct.pack("<II", p.rows, p.cols))
            body.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return b"".join(header + body)

    def decode(self, data: bytes):
        fp = io.BytesIO(data)

        def read(size):
            chunk = fp.read(size)
            if len(chunk) != size:
                raise ParseError("Truncated weights file!")
            return chunk

        if read(4) != WEIGHTS_MAGIC:
            raise ParseError("Unknown weights file format!")
        (length,) = struct.unpack("<B", read(1))
        file_version = read(length).decode("ascii")
        if version.parse(file_version).major != \
                version.parse(WEIGHTS_VERSION).major:
            raise ParseError("Unsupported weights file version %s!"
                             % file_version)
        (count,) = struct.unpack("<I", read(4))
        shapes = []
        for _ in range(count):
            (length,) = struct.unpack("<H", read(2))
            name = read(length).decode("utf8")
            rows, cols = struct.unpack("<II", read(8))
            shapes.append((name, rows, cols))
        params = ParamStore()
        for name, rows, cols in shapes:
            values = np.frombuffer(read(8 * rows * cols), dtype="<f8")
            params.add(name, values.reshape(rows, cols))
        if fp.read(1):
            raise ParseError("Trailing data in weights file!")
        self.data = params


register = [
    ("json", JsonFile, dict),
    ("jsonl", JsonLinesFile, list),
    ("txt", TextFile, str),
    ("log", "txt", None),
    ("svg", "txt", None),
    ("csv", CsvFile, None),
    ("vocab", VocabFile, Vocabulary),
    ("tawt", WeightsFile, ParamStore),
]
