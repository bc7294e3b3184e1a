#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Reading and writing of every file the command line produces.

Floating point numbers are always written with
numpy.format_float_scientific(x, unique=True, trim="0"), the shortest
scientific notation that reads back to the same double, independently of the
locale. The digit after the point keeps the output valid JSON.

Functions
    write_prompts_csv, read_prompts_csv: prompts, one per row, header d0,d1,..
    write_profiles_csv: client_id,class,count rows
    dumps_record, append_jsonl: JSON with sorted keys and exact floats
    write_params, read_params: GenerativeParams as flat text
    CheckpointWriter: raw prompts per round in HDF5
"""
import json
import logging
import math

import h5py as h5
import numpy as np

from .model import (GenerativeParams, GlobalPool, InputShapeError, MlpParams,
                    PFPTError)

logger = logging.getLogger(__name__)

PARAMS_MAGIC = "pfpt-params 1"
NETS = ("w_net", "gamma_net")
ARRAYS = ("W1", "b1", "W2", "b2")


def fmt(x):
    """Round-trip exact, locale-independent text of a float."""
    return np.format_float_scientific(float(x), unique=True, trim="0")


def dumps_record(obj):
    """
    Compact JSON with sorted keys, floats in fmt() notation and NaN or
    infinite values as null.
    """
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join("%s:%s" % (json.dumps(str(k)), dumps_record(v))
                              for k, v in sorted(obj.items())) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps_record(v) for v in obj) + "]"
    raise TypeError("cannot serialize %r" % type(obj))


def append_jsonl(f, obj):
    f.write(dumps_record(obj) + "\n")


def write_prompts_csv(path, prompts):
    prompts = np.atleast_2d(np.asarray(prompts, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join("d%d" % j for j in range(prompts.shape[1])) + "\n")
        for row in prompts:
            f.write(",".join(fmt(x) for x in row) + "\n")


def read_prompts_csv(path):
    """
    Prompts written by write_prompts_csv.

    :return: Array (n, d), n >= 1
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.strip() for line in f if line.strip()]
    except OSError as err:
        raise PFPTError("could not read prompts from %s: %s"
                        % (path, err.strerror)) from None
    if not lines:
        raise InputShapeError("%s is empty" % path)
    header = lines[0].split(",")
    if header != ["d%d" % j for j in range(len(header))]:
        raise InputShapeError("%s: expected a header d0,d1,..., got %r"
                              % (path, lines[0]))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        values = line.split(",")
        if len(values) != len(header):
            raise InputShapeError("%s:%d: %d values for %d columns"
                                  % (path, lineno, len(values), len(header)))
        try:
            rows.append([float(v) for v in values])
        except ValueError:
            raise InputShapeError("%s:%d: not a number in %r"
                                  % (path, lineno, line)) from None
    if not rows:
        raise InputShapeError("%s holds no prompts" % path)
    return np.array(rows)


def write_profiles_csv(path, profiles):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("client_id,class,count\n")
        for profile in profiles:
            for c, count in enumerate(profile.class_counts):
                f.write("%d,%d,%d\n" % (profile.client_id, c, count))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def _values_line(array):
    return " ".join(fmt(x) for x in np.ravel(array))


def write_params(path, gp):
    """
    GenerativeParams as text: a header, the pool rows, then every net array
    as a '<net>.<array> <shape>' line followed by its row-major values.
    """
    lines = [PARAMS_MAGIC, "dim %d" % gp.dim, "hidden %d" % gp.w_net.hidden,
             "generation %d" % gp.pool.generation, "pool %d" % gp.pool.size]
    lines.extend(_values_line(row) for row in gp.pool.prompts)
    for net_name in NETS:
        net = getattr(gp, net_name)
        for name, array in zip(ARRAYS, net.arrays()):
            lines.append("%s.%s %s" % (net_name, name,
                                       " ".join(str(n) for n in array.shape)))
            lines.append(_values_line(array))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _expect(lines, pos, key, path):
    if pos >= len(lines) or not lines[pos].startswith(key + " "):
        raise InputShapeError("%s:%d: expected '%s'" % (path, pos + 1, key))
    return lines[pos][len(key) + 1:].split()


def read_params(path):
    """Inverse of write_params."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f]
    except OSError as err:
        raise PFPTError("could not read parameters from %s: %s"
                        % (path, err.strerror)) from None
    if not lines or lines[0] != PARAMS_MAGIC:
        raise InputShapeError("%s is not a parameter file" % path)
    dim = int(_expect(lines, 1, "dim", path)[0])
    generation = int(_expect(lines, 3, "generation", path)[0])
    size = int(_expect(lines, 4, "pool", path)[0])
    try:
        prompts = np.array([[float(v) for v in line.split()]
                            for line in lines[5:5 + size]])
        pos = 5 + size
        nets = {}
        for net_name in NETS:
            arrays = []
            for name in ARRAYS:
                shape = tuple(int(n) for n in _expect(
                    lines, pos, "%s.%s" % (net_name, name), path))
                values = np.array([float(v) for v in lines[pos + 1].split()])
                arrays.append(values.reshape(shape))
                pos += 2
            nets[net_name] = MlpParams(*arrays)
    except (ValueError, IndexError) as err:
        raise InputShapeError("%s: malformed parameter file (%s)"
                              % (path, err)) from None
    if prompts.shape != (size, dim):
        raise InputShapeError("%s: pool has shape %s, header says (%d, %d)"
                              % (path, prompts.shape, size, dim))
    return GenerativeParams(GlobalPool(prompts, generation), nets["w_net"],
                            nets["gamma_net"])


class CheckpointWriter:
    """
    Raw prompts of selected rounds in one HDF5 file, one group round_XXXX per
    round holding the datasets pool, uploads and upload_client.
    """

    def __init__(self, path):
        self.path = path
        try:
            self.file = h5.File(path, "w")
        except OSError:
            raise PFPTError("Could not create checkpoint file %s" % path)

    def write_round(self, round_, pool, uploads):
        group = self.file.create_group("round_%04d" % round_)
        group["pool"] = pool.prompts
        group["uploads"] = np.concatenate([u.prompts for u in uploads])
        group["upload_client"] = np.concatenate(
            [np.full(u.size, u.client_id, dtype=np.int64) for u in uploads])
        group.attrs["generation"] = pool.generation

    def close(self):
        self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_checkpoints(path):
    """{round: (pool, uploads, upload_client)} from a checkpoint file."""
    try:
        with h5.File(path, "r") as f:
            return {int(name.split("_")[1]): (f[name]["pool"][()],
                                               f[name]["uploads"][()],
                                               f[name]["upload_client"][()])
                    for name in f}
    except OSError:
        raise PFPTError("Could not read checkpoints from %s" % path)
