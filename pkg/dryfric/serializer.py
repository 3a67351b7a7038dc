# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Wire formats for messages exchanged with worker processes.

Only plain data crosses the wire: None, bool, int, float, str, bytes, list,
dict, tuple, numpy arrays and numpy scalars. Arrays keep dtype, shape and
exact bytes, so an ensemble assembled from workers is bit-identical to an
in-process run. Anything else raises TypeError; nothing is pickled.
"""
import json
import base64

import numpy as np

try:
    import msgpack
    HAVE_MSGPACK = True
except ImportError:
    HAVE_MSGPACK = False


#: {type string: Serializer subclass}
all_serializers = {}

# marks dicts that stand for a non-native value
TAG = '___type_name___'


def _register(cls):
    all_serializers[cls.type] = cls
    return cls


class Serializer:
    """Tagged-dict codec shared by the concrete wire formats.

    Subclasses implement `dumps`/`loads` and choose how raw bytes are carried
    (`_pack_bytes`/`_unpack_bytes`).
    """
    type = None

    def dumps(self, obj):
        raise NotImplementedError()

    def loads(self, msg):
        raise NotImplementedError()

    def _pack_bytes(self, data):
        return data

    def _unpack_bytes(self, data):
        return data

    def encode(self, obj):
        """Tagged dict for a value the wire format cannot carry natively."""
        if isinstance(obj, np.ndarray):
            arr = np.ascontiguousarray(obj)
            return {TAG: 'ndarray', 'dtype': arr.dtype.str, 'shape': list(arr.shape),
                    'data': self._pack_bytes(arr.tobytes())}
        if isinstance(obj, np.generic):
            if isinstance(obj, np.bool_):
                value = bool(obj)
            elif isinstance(obj, np.integer):
                value = int(obj)
            elif isinstance(obj, np.floating):
                value = float(obj)
            else:
                raise TypeError("Cannot serialize numpy scalar of type %s" % obj.dtype)
            return {TAG: 'np_number', 'dtype': obj.dtype.str, 'value': value}
        if isinstance(obj, tuple):
            return {TAG: 'tuple', 'data': list(obj)}
        if obj is None:
            return {TAG: 'none'}
        raise TypeError("Cannot serialize object of type %s" % type(obj).__name__)

    def decode(self, dct):
        """Inverse of `encode`; plain dicts pass through."""
        kind = dct.get(TAG) if isinstance(dct, dict) else None
        if kind is None:
            return dct
        if kind == 'ndarray':
            data = self._unpack_bytes(dct['data'])
            return np.frombuffer(data, dtype=np.dtype(dct['dtype'])).reshape(dct['shape'])
        if kind == 'np_number':
            return np.dtype(dct['dtype']).type(dct['value'])
        if kind == 'tuple':
            return tuple(dct['data'])
        if kind == 'none':
            return None
        if kind == 'bytes':
            return self._unpack_bytes(dct['data'])
        raise TypeError("Unknown encoded type %r" % kind)


class MsgpackSerializer(Serializer):
    """msgpack with binary payloads; `strict_types` routes tuples and numpy
    float/int subclasses through `encode` so they keep their type.
    """
    type = 'msgpack'

    def __init__(self):
        if not HAVE_MSGPACK:
            raise RuntimeError("msgpack is not installed")

    def dumps(self, obj):
        return msgpack.dumps(obj, use_bin_type=True, strict_types=True, default=self.encode)

    def loads(self, msg):
        return msgpack.loads(msg, object_hook=self.decode, strict_map_key=False)


class JsonSerializer(Serializer):
    """JSON with base64 payloads. Tuples are tagged before encoding because
    the json module turns them into lists without consulting `default`.
    """
    type = 'json'

    def _pack_bytes(self, data):
        return base64.b64encode(data).decode('ascii')

    def _unpack_bytes(self, data):
        return base64.b64decode(data)

    def _prepare(self, obj):
        if isinstance(obj, tuple):
            return {TAG: 'tuple', 'data': [self._prepare(x) for x in obj]}
        if isinstance(obj, list):
            return [self._prepare(x) for x in obj]
        if isinstance(obj, dict):
            return {k: self._prepare(v) for k, v in obj.items()}
        if isinstance(obj, bytes):
            return {TAG: 'bytes', 'data': self._pack_bytes(obj)}
        return obj

    def dumps(self, obj):
        return json.dumps(self._prepare(obj), default=self.encode).encode('utf-8')

    def loads(self, msg):
        return json.loads(msg.decode('utf-8'), object_hook=self.decode)


if HAVE_MSGPACK:
    _register(MsgpackSerializer)
_register(JsonSerializer)
