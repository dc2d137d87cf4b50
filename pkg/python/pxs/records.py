"""
Fixed-size binary records.

Archive headers and per-proxy records are declared as dataclasses whose
fields carry their wire type. ``analyze_dataclass`` computes the packed
little-endian layout once; ``RecordLayout.pack`` / ``unpack`` do the rest.

Example:
    @dataclass
    class Header:
        version: int = Field(uint16=True, default=1)
        fov_h: float = Field(float64=True, default=0.0)

    layout = analyze_dataclass(Header)
    raw = layout.pack(Header(version=1, fov_h=1.0))
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, get_type_hints

from pxs.types import PxsDecodeError, PxsValidationError

T = TypeVar("T")


class FieldType(Enum):
    """Wire types of record fields."""
    INT8 = "int8"
    UINT8 = "uint8"
    INT16 = "int16"
    UINT16 = "uint16"
    INT32 = "int32"
    UINT32 = "uint32"
    FLOAT32 = "float32"
    FLOAT64 = "float64"
    BYTES = "bytes"  # Fixed-length raw bytes


_FIELD_FORMATS = {
    FieldType.INT8: "b",
    FieldType.UINT8: "B",
    FieldType.INT16: "h",
    FieldType.UINT16: "H",
    FieldType.INT32: "i",
    FieldType.UINT32: "I",
    FieldType.FLOAT32: "f",
    FieldType.FLOAT64: "d",
}


def Field(
    field_type: Optional[FieldType] = None,
    *,
    uint8: bool = False,
    int16: bool = False,
    uint16: bool = False,
    int32: bool = False,
    uint32: bool = False,
    float64: bool = False,
    count: int = 1,
    byte_len: Optional[int] = None,
    default: Any = None,
) -> Any:
    """
    Declare a record field with an explicit wire type.

    Args:
        field_type: The field type (alternative to the bool flags)
        count: Number of consecutive values (the field holds a tuple when > 1)
        byte_len: Length of a BYTES field
        default: Default value
    """
    if field_type is None:
        for flag, ftype in (
            (uint8, FieldType.UINT8),
            (int16, FieldType.INT16),
            (uint16, FieldType.UINT16),
            (int32, FieldType.INT32),
            (uint32, FieldType.UINT32),
            (float64, FieldType.FLOAT64),
        ):
            if flag:
                field_type = ftype
                break
        else:
            if byte_len is not None:
                field_type = FieldType.BYTES

    metadata = {"pxs_field_type": field_type, "pxs_count": count, "pxs_byte_len": byte_len}
    if default is not None:
        return field(default=default, metadata=metadata)
    return field(default_factory=lambda: _default_for(field_type, count, byte_len), metadata=metadata)


def _default_for(field_type: Optional[FieldType], count: int, byte_len: Optional[int]) -> Any:
    if field_type == FieldType.BYTES:
        return b"\x00" * (byte_len or 0)
    zero = 0.0 if field_type in (FieldType.FLOAT32, FieldType.FLOAT64) else 0
    if count > 1:
        return tuple([zero] * count)
    return zero


@dataclass
class RecordFieldInfo:
    """Layout of one field inside a packed record."""
    name: str
    field_type: FieldType
    offset: int
    size: int
    count: int = 1


@dataclass
class RecordLayout:
    """Packed little-endian layout of a record dataclass."""
    fields: List[RecordFieldInfo]
    total_size: int
    format: str

    def pack(self, data: Any) -> bytes:
        """Serialize a dataclass instance."""
        values: List[Any] = []
        for info in self.fields:
            value = getattr(data, info.name)
            if info.field_type == FieldType.BYTES:
                if len(value) != info.size:
                    raise PxsValidationError(
                        f"field '{info.name}' needs {info.size} bytes, got {len(value)}"
                    )
                values.append(bytes(value))
            elif info.count > 1:
                if len(value) != info.count:
                    raise PxsValidationError(
                        f"field '{info.name}' needs {info.count} values, got {len(value)}"
                    )
                values.extend(value)
            else:
                values.append(value)
        try:
            return struct.pack(self.format, *values)
        except struct.error as e:
            raise PxsValidationError(f"cannot pack record: {e}") from None

    def unpack(self, buffer: bytes, cls: Type[T], offset: int = 0) -> T:
        """
        Deserialize a record starting at ``offset``.

        Raises:
            PxsDecodeError: If the buffer is too short
        """
        if len(buffer) - offset < self.total_size:
            raise PxsDecodeError(len(buffer), f"truncated {cls.__name__} record")
        flat = struct.unpack_from(self.format, buffer, offset)
        kwargs: Dict[str, Any] = {}
        pos = 0
        for info in self.fields:
            if info.field_type == FieldType.BYTES or info.count == 1:
                kwargs[info.name] = flat[pos]
                pos += 1
            else:
                kwargs[info.name] = tuple(flat[pos:pos + info.count])
                pos += info.count
        return cls(**kwargs)


def analyze_dataclass(cls: Type) -> RecordLayout:
    """
    Compute the packed layout of a record dataclass.

    Fields without explicit metadata are inferred from their annotation
    (``int`` -> int32, ``float`` -> float64, ``bytes`` needs ``byte_len``).
    """
    infos: List[RecordFieldInfo] = []
    fmt = ["<"]
    offset = 0
    hints = get_type_hints(cls)

    for f in fields(cls):
        metadata = f.metadata or {}
        field_type = metadata.get("pxs_field_type")
        count = metadata.get("pxs_count", 1)
        byte_len = metadata.get("pxs_byte_len")

        if field_type is None:
            field_type = _infer_field_type(hints.get(f.name, f.type))

        if field_type == FieldType.BYTES:
            if byte_len is None:
                raise PxsValidationError(f"bytes field '{f.name}' needs byte_len")
            fmt.append(f"{byte_len}s")
            size = byte_len
        else:
            code = _FIELD_FORMATS[field_type]
            fmt.append(code * count)
            size = struct.calcsize("<" + code) * count

        infos.append(RecordFieldInfo(f.name, field_type, offset, size, count))
        offset += size

    return RecordLayout(fields=infos, total_size=offset, format="".join(fmt))


def _infer_field_type(hint: Any) -> FieldType:
    if hint is float:
        return FieldType.FLOAT64
    if hint is bytes:
        return FieldType.BYTES
    return FieldType.INT32


_LAYOUT_CACHE: Dict[type, RecordLayout] = {}


def layout_of(cls: Type) -> RecordLayout:
    """Cached ``analyze_dataclass``."""
    layout = _LAYOUT_CACHE.get(cls)
    if layout is None:
        layout = analyze_dataclass(cls)
        _LAYOUT_CACHE[cls] = layout
    return layout


def read_array(buffer: bytes, offset: int, fmt: str, count: int) -> Tuple[Tuple[Any, ...], int]:
    """Read ``count`` little-endian values of ``fmt``; returns (values, new offset)."""
    full = f"<{count}{fmt}"
    size = struct.calcsize(full)
    if len(buffer) - offset < size:
        raise PxsDecodeError(len(buffer), f"truncated array of {count} '{fmt}' values")
    return struct.unpack_from(full, buffer, offset), offset + size
