import json
import logging
import os
import struct
from datetime import datetime

import numpy as np

logger = logging.getLogger(__name__)

# 缓存目录，可由环境变量 LOOPINT_CACHE_DIR 覆盖
CACHE_DIR = os.environ.get("LOOPINT_CACHE_DIR", "spectral_cache")
MAGIC = b"LOOPSPEC"
FORMAT_VERSION = 1


def get_cache_dir():
    """每次调用重新读取环境变量，便于 CLI 和测试切换目录"""
    return os.environ.get("LOOPINT_CACHE_DIR", CACHE_DIR)


def get_cache_file_path(key):
    """获取缓存文件路径"""
    return os.path.join(get_cache_dir(), f"{key}.spec")


def get_metadata_file_path():
    """获取元数据文件路径"""
    return os.path.join(get_cache_dir(), "metadata.json")


def load_metadata():
    """加载元数据"""
    metadata_file = get_metadata_file_path()
    if os.path.exists(metadata_file):
        try:
            with open(metadata_file, 'r', encoding='utf-8') as f:
                return json.load(f)
        except Exception as e:
            logger.warning(f"⚠️ 加载谱缓存元数据失败: {e}")
    return {}


def save_metadata(metadata):
    """保存元数据"""
    try:
        os.makedirs(get_cache_dir(), exist_ok=True)
        with open(get_metadata_file_path(), 'w', encoding='utf-8') as f:
            json.dump(metadata, f, ensure_ascii=False, indent=2, sort_keys=True)
    except Exception as e:
        logger.warning(f"⚠️ 保存谱缓存元数据失败: {e}")


def is_cache_valid(key):
    """元数据登记过、文件存在且版本一致才算有效"""
    entry = load_metadata().get(str(key))
    if not entry or entry.get('version') != FORMAT_VERSION:
        return False
    return os.path.exists(get_cache_file_path(key))


def save_to_cache(key, eigenvalues, eigenvectors, params):
    """
    保存本征分解到缓存

    文件布局: 8 字节魔数 LOOPSPEC，小端 uint64 头长度，UTF-8 JSON 头，
    随后是 float64 本征值，以及按行优先、实部虚部交错存放的本征向量矩阵
    """
    try:
        os.makedirs(get_cache_dir(), exist_ok=True)
        eigenvalues = np.ascontiguousarray(eigenvalues, dtype='<f8')
        eigenvectors = np.ascontiguousarray(eigenvectors, dtype=np.complex128)
        header = json.dumps({
            'params': params,
            'size': int(eigenvalues.shape[0]),
            'shape': list(eigenvectors.shape),
            'version': FORMAT_VERSION,
        }, sort_keys=True, default=str).encode('utf-8')
        interleaved = eigenvectors.view('<f8').reshape(-1)
        with open(get_cache_file_path(key), 'wb') as f:
            f.write(MAGIC)
            f.write(struct.pack('<Q', len(header)))
            f.write(header)
            f.write(eigenvalues.tobytes())
            f.write(interleaved.astype('<f8').tobytes())

        metadata = load_metadata()
        metadata[str(key)] = {
            'date': datetime.now().isoformat(timespec='seconds'),
            'size': int(eigenvalues.shape[0]),
            'version': FORMAT_VERSION,
        }
        save_metadata(metadata)
        logger.debug("✅ 谱分解已缓存: %s", key)
    except Exception as e:
        logger.warning(f"⚠️ 缓存谱分解 {key} 失败: {e}")


def load_from_cache(key):
    """从缓存加载 (eigenvalues, eigenvectors, params)，文件损坏时返回 None"""
    path = get_cache_file_path(key)
    try:
        if not os.path.exists(path):
            return None
        with open(path, 'rb') as f:
            blob = f.read()
        if blob[:8] != MAGIC:
            raise ValueError("魔数不匹配")
        (header_len,) = struct.unpack('<Q', blob[8:16])
        header = json.loads(blob[16:16 + header_len].decode('utf-8'))
        size = header['size']
        rows, cols = header['shape']
        offset = 16 + header_len
        eigenvalues = np.frombuffer(blob, dtype='<f8', count=size, offset=offset).copy()
        offset += 8 * size
        flat = np.frombuffer(blob, dtype='<f8', count=2 * rows * cols, offset=offset)
        eigenvectors = flat.view(np.complex128).reshape(rows, cols).copy()
        return eigenvalues, eigenvectors, header['params']
    except Exception as e:
        logger.warning(f"⚠️ 谱缓存 {key} 已损坏，将重新计算: {e}")
        try:
            os.remove(path)
        except OSError:
            pass
    return None


def clear_cache():
    """删除全部缓存文件"""
    cache_dir = get_cache_dir()
    if not os.path.isdir(cache_dir):
        return 0
    removed = 0
    for name in os.listdir(cache_dir):
        if name.endswith('.spec') or name == 'metadata.json':
            os.remove(os.path.join(cache_dir, name))
            removed += 1
    return removed
