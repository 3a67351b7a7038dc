import numpy as np
import pytest

from dryfric.serializer import JsonSerializer, MsgpackSerializer, HAVE_MSGPACK, all_serializers


test_data = {
    'int': 1,
    'float': 0.1,
    'str': 'abc',
    'bytes': b'abc',
    'none': None,
    'list': [1, 2],
    'tuple': (1, 'b', 2.5),
    'ndarray': np.arange(8).reshape(2, 4).astype('float64'),
    'int32': np.arange(5, dtype='int32'),
    'nested': {'blocks': [0, 3], 'sizes': (4096, 17)},
}


@pytest.mark.skipif(not HAVE_MSGPACK, reason='msgpack not available')
def test_msgpack():
    check_serializer(MsgpackSerializer())
    ser = MsgpackSerializer()
    # numpy scalars keep their type through msgpack
    out = ser.loads(ser.dumps({'x': np.float32(1.5), 'n': np.int64(7), 'b': np.bool_(True)}))
    assert type(out['x']) is np.float32 and out['x'] == 1.5
    assert type(out['n']) is np.int64 and out['n'] == 7
    assert out['b'] is True or type(out['b']) is np.bool_


def test_json():
    check_serializer(JsonSerializer())


def check_serializer(serializer):
    d2 = serializer.loads(serializer.dumps(test_data))
    for k, v1 in test_data.items():
        v2 = d2[k]
        if isinstance(v1, np.ndarray):
            assert isinstance(v2, np.ndarray)
            assert v2.dtype == v1.dtype
            assert v2.shape == v1.shape
            assert v2.tobytes() == v1.tobytes()
        elif k == 'nested':
            assert v2['blocks'] == [0, 3]
            assert v2['sizes'] == (4096, 17)
        else:
            assert type(v1) is type(v2), k
            assert v1 == v2, k


@pytest.mark.parametrize('name', sorted(all_serializers))
def test_exact_float_bytes(name):
    ser = all_serializers[name]()
    x = np.random.default_rng(0).standard_normal(1000) * 1e-300
    y = ser.loads(ser.dumps({'terminal': x}))['terminal']
    assert y.tobytes() == x.tobytes()


def test_non_contiguous_array():
    ser = JsonSerializer()
    x = np.arange(12.0).reshape(3, 4)[:, ::2]
    y = ser.loads(ser.dumps(x))
    assert np.array_equal(x, y)


@pytest.mark.parametrize('name', sorted(all_serializers))
def test_rejects_arbitrary_objects(name):
    ser = all_serializers[name]()
    with pytest.raises(TypeError):
        ser.dumps({'obj': object()})
