##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the class RunArchive, the directory of result
# items written by a training, baseline or sweep run. Items are addressed
# by their relative path. Their file format is selected by the file
# suffix using the conversion classes registered in the package
# (see register() in the package topoalign).
#
# Every archive holds the item "summary.json". Its attributes "created"
# and "hash" are excluded from the archive hash, which makes the hash a
# fingerprint of the run results.
#
##########################################################################

import hashlib
import os
import typing
from datetime import datetime, timezone

from loguru import logger

from .errors import InvalidInput, IoError
from .filebase import WeightsFile
from .numcore import ParamStore

# Attributes of summary.json which do not take part in the hash
_VOLATILE = ("created", "hash")


def timestamp() -> str:
    """Return the current ISO 8601 compatible timestamp as string."""
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunArchive:
    """Collection of result items of one run."""

    _suffixes = {}
    _classes = {}

    def __init__(self, items: dict = None, run_id: str = None):
        """Construct a run archive.

        Args:
            items: Dictionary of items mapping relative paths to data.
            run_id: Identifier of the run stored in summary.json.
        """
        self._items = {}
        for path, data in (items or {}).items():
            self[path] = data
        if "summary.json" not in self:
            self["summary.json"] = {}
        summary = self["summary.json"]
        if run_id is not None:
            summary["run_id"] = run_id
        summary.setdefault("run_id", "")
        summary.setdefault("created", timestamp())
        summary.setdefault("hash", None)

    @property
    def run_id(self) -> str:
        return self["summary.json"]["run_id"]

    @property
    def summary(self) -> dict:
        return self["summary.json"]

    def __contains__(self, path):
        """Return true, if the given path matches an item of the archive."""
        return path in self._items

    def __setitem__(self, path: str, data):
        """Store data as an archive item."""
        if "." not in os.path.basename(path):
            raise InvalidInput("Item '%s' has no file suffix!" % path)
        ext = path.rsplit(".", 1)[1]
        if ext in self._suffixes:
            cls = self._suffixes[ext]
        elif type(data) in self._classes:
            cls = self._classes[type(data)]
        else:
            raise InvalidInput("No matching file format found for item "
                               "'%s'!" % path)
        self._items[path] = cls(data)

    def __getitem__(self, path: str):
        """Get the data content of an archive item."""
        if path in self:
            return self._items[path].data
        raise KeyError("Unknown item '%s'!" % path)

    def __delitem__(self, path: str):
        if path == "summary.json":
            raise InvalidInput("Item 'summary.json' is required!")
        self._items.pop(path, None)

    def keys(self) -> typing.List[str]:
        """Return a sorted list of the relative paths of all items."""
        return sorted(self._items.keys())

    def values(self) -> typing.List:
        return [self[k] for k in self.keys()]

    def items(self):
        return {k: self[k] for k in self.keys()}

    def hash(self) -> str:
        """Calculate and save the hash value of this archive."""
        summary = self["summary.json"]
        save = {k: summary.get(k) for k in _VOLATILE}
        for key in _VOLATILE:
            summary[key] = None

        hashes = [self._items[p].hash() for p in self.keys()]
        myhash = hashlib.sha256(" ".join(hashes).encode("ascii")).hexdigest()

        for key, value in save.items():
            summary[key] = value
        summary["hash"] = myhash
        return myhash

    def write(self, directory: str):
        """Write all items below the given directory. Existing items with
        the same paths are replaced.

        Args:
            directory: Target directory, created if missing.
        """
        self.hash()
        try:
            for path in self.keys():
                fn = os.path.join(directory, *path.split("/"))
                os.makedirs(os.path.dirname(fn), exist_ok=True)
                with open(fn, "wb") as fp:
                    fp.write(self._items[path].encode())
        except OSError as error:
            raise IoError("Cannot write run archive to '%s': %s!"
                          % (directory, error.strerror or error))
        logger.info("wrote {} items of run {} to {}", len(self._items),
                    self.run_id, directory)

    @classmethod
    def read(cls, directory: str) -> "RunArchive":
        """Read all items with registered suffixes below a directory."""
        if not os.path.isdir(directory):
            raise IoError("Run archive '%s' does not exist!" % directory)
        items = {}
        for root, dirs, files in os.walk(directory):
            dirs.sort()
            for name in sorted(files):
                ext = name.rsplit(".", 1)[-1]
                if ext not in cls._suffixes:
                    continue
                fn = os.path.join(root, name)
                path = os.path.relpath(fn, directory).replace(os.sep, "/")
                with open(fn, "rb") as fp:
                    items[path] = fp.read()
        return cls(items)

    def __str__(self):
        s = ["Run archive"]
        s.append("  run id:  " + self.run_id)
        s.append("  created: " + str(self.summary.get("created")))
        if self.summary.get("hash"):
            s.append("  hash:    " + self.summary["hash"])
        s.append("  items:   %d" % len(self._items))
        for path in self.keys():
            s.append("    " + path)
        return "\n".join(s)


##########################################################################
# Weight files


def save_weights(params: ParamStore, path: str):
    """Write the parameters to a versioned binary weights file."""
    try:
        with open(path, "wb") as fp:
            fp.write(WeightsFile(params).encode())
    except OSError as error:
        raise IoError("Cannot write weights file '%s': %s!"
                      % (path, error.strerror or error))


def load_weights(path: str) -> ParamStore:
    """Read a weights file written by save_weights()."""
    try:
        with open(path, "rb") as fp:
            data = fp.read()
    except OSError as error:
        raise IoError("Cannot read weights file '%s': %s!"
                      % (path, error.strerror or error))
    return WeightsFile(data).data
