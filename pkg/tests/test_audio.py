import struct
import wave

import numpy as np
import pytest

from samplernn import audio
from samplernn.audio import AudioBuffer
from samplernn.errors import (
    AudioFormatError,
    ContractError,
    EmptyCorpusError,
    InsufficientDataError,
    RateMismatchError,
    UnsupportedFormatError,
)

from conftest import make_tone


def write_raw_wav(path, pcm, rate=16000, channels=1, width=2):
    """Independent WAV writer (stdlib wave) used as the read_wav oracle."""
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(pcm)


def read_pcm_frames(path):
    with wave.open(str(path), "rb") as w:
        return np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")


# -- read_wav -----------------------------------------------------------------


def test_read_pcm_scaling(tmp_path):
    path = tmp_path / "t.wav"
    write_raw_wav(path, struct.pack("<3h", 0, 16384, -32768))
    buf = audio.read_wav(path)
    assert np.allclose(buf.samples, [0.0, 0.5, -1.0])
    assert buf.sample_rate == 16000


def test_read_one_second_at_16k(tmp_path):
    path = tmp_path / "t.wav"
    write_raw_wav(path, np.zeros(16000, dtype="<i2").tobytes())
    assert len(audio.read_wav(path)) == 16000


def test_read_rejects_8bit(tmp_path):
    path = tmp_path / "t.wav"
    write_raw_wav(path, b"\x00\x01\x02\x03", width=1)
    with pytest.raises(UnsupportedFormatError) as err:
        audio.read_wav(path)
    assert "width" in str(err.value)


def test_read_rejects_stereo(tmp_path):
    path = tmp_path / "t.wav"
    write_raw_wav(path, struct.pack("<4h", 0, 0, 0, 0), channels=2)
    with pytest.raises(UnsupportedFormatError) as err:
        audio.read_wav(path)
    assert "channels" in str(err.value)


def test_read_rejects_malformed_header(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"not a riff container at all")
    with pytest.raises(AudioFormatError):
        audio.read_wav(path)


# -- write_wav ----------------------------------------------------------------


def test_write_zero_maps_to_zero_frame(tmp_path):
    path = tmp_path / "t.wav"
    audio.write_wav(AudioBuffer(np.array([0.0]), 16000), path)
    assert read_pcm_frames(path).tolist() == [0]


def test_write_clamps_above_one(tmp_path):
    path = tmp_path / "t.wav"
    audio.write_wav(AudioBuffer(np.array([2.0]), 16000), path)
    assert read_pcm_frames(path).tolist() == [32767]


def test_write_rejects_empty():
    with pytest.raises(ContractError):
        audio.write_wav(AudioBuffer(np.zeros(0), 16000), "/tmp/never.wav")


def test_write_unwritable_path_raises_oserror():
    buf = AudioBuffer(np.zeros(4), 16000)
    with pytest.raises(OSError):
        audio.write_wav(buf, "/nonexistent-dir/x.wav")


def test_roundtrip_error_within_half_step(tmp_path):
    # brute-force oracle over a dense amplitude grid, including the edges
    # and bin midpoints where rounding error peaks
    grid = np.concatenate(
        [np.linspace(-1.0, 1.0, 4001), np.array([1.0, -1.0, 0.999999, -0.999999])]
    ).astype(np.float32)
    path = tmp_path / "grid.wav"
    audio.write_wav(AudioBuffer(grid, 16000), path)
    back = audio.read_wav(path)
    err = np.abs(back.samples.astype(np.float64) - grid.astype(np.float64))
    assert err.max() <= 1.0 / 32768.0 + 1e-12


def test_write_read_idempotent_on_quantized(tmp_path):
    # all 65536 representable frames survive a write-read-write cycle bitwise
    pcm = np.arange(-32768, 32768, dtype="<i2")
    first = tmp_path / "a.wav"
    second = tmp_path / "b.wav"
    write_raw_wav(first, pcm.tobytes())
    buf = audio.read_wav(first)
    audio.write_wav(buf, second)
    assert np.array_equal(read_pcm_frames(second), pcm)


# -- chunking -----------------------------------------------------------------


def tone_file(tmp_path, name, seconds, rate=16000, freq=200.0):
    path = tmp_path / name
    audio.write_wav(AudioBuffer(make_tone(freq, seconds, rate), rate), path)
    return path


def test_chunk_length_is_eight_seconds_at_16k(tmp_path):
    path = tone_file(tmp_path, "t.wav", 17.0)
    chunks, manifest = audio.chunk_corpus([path], 8.0, 16000)
    assert all(len(c) == 128000 for c in chunks)
    assert manifest.chunk_length_samples == 128000
    assert len(chunks) == 2


def test_35_minute_corpus_gives_262_chunks(tmp_path):
    # same arithmetic at a low rate to keep the fixture small:
    # floor(35*60 / 8) = 262 whole 8-second chunks
    rate = 100
    path = tone_file(tmp_path, "t.wav", 35 * 60, rate=rate, freq=7.0)
    chunks, _ = audio.chunk_corpus([path], 8.0, rate)
    assert len(chunks) == 262


def test_short_file_contributes_zero_chunks(tmp_path):
    short = tone_file(tmp_path, "short.wav", 7.0)
    long = tone_file(tmp_path, "long.wav", 9.0)
    chunks, manifest = audio.chunk_corpus([short, long], 8.0, 16000)
    assert len(chunks) == 1
    assert manifest.entries[0].source_file == str(long)


def test_zero_chunks_is_empty_corpus_error(tmp_path):
    path = tone_file(tmp_path, "short.wav", 3.0)
    with pytest.raises(EmptyCorpusError):
        audio.chunk_corpus([path], 8.0, 16000)


def test_rate_mismatch_is_error(tmp_path):
    path = tone_file(tmp_path, "t.wav", 10.0, rate=8000)
    with pytest.raises(RateMismatchError):
        audio.chunk_corpus([path], 8.0, 16000)


def test_chunking_conserves_samples(tmp_path):
    seconds = 13.7
    path = tone_file(tmp_path, "t.wav", seconds)
    source_len = len(audio.read_wav(path))
    chunks, _ = audio.chunk_corpus([path], 2.0, 16000)
    tail = source_len - sum(len(c) for c in chunks)
    assert 0 <= tail < 32000
    assert sum(len(c) for c in chunks) + tail == source_len


def test_chunks_are_contiguous_slices(tmp_path):
    path = tone_file(tmp_path, "t.wav", 5.0)
    source = audio.read_wav(path).samples
    chunks, manifest = audio.chunk_corpus([path], 1.0, 16000)
    for entry, chunk in zip(manifest.entries, chunks):
        lo = entry.offset_samples
        assert np.array_equal(chunk.samples, source[lo : lo + 16000])


# -- split_dataset ------------------------------------------------------------


def synthetic_manifest(n):
    entries = [audio.ManifestEntry(i, "src.wav", i * 10, "train") for i in range(n)]
    return audio.ChunkManifest("test", 10, entries)


def test_split_3200_gives_2816_192_192():
    result = audio.split_dataset(synthetic_manifest(3200), (0.88, 0.06, 0.06), seed=9)
    sizes = result.split_sizes()
    assert sizes == {"train": 2816, "test": 192, "validation": 192}


def test_split_exact_multiples():
    sizes = audio.split_dataset(synthetic_manifest(100), (0.88, 0.06, 0.06), seed=1).split_sizes()
    assert sizes == {"train": 88, "test": 6, "validation": 6}


def test_split_remainder_goes_to_train():
    sizes = audio.split_dataset(synthetic_manifest(33), (0.88, 0.06, 0.06), seed=1).split_sizes()
    # floor counts: 29.04 -> train gets 33 - 1 - 1
    assert sizes == {"train": 31, "test": 1, "validation": 1}


def test_split_deterministic_for_seed():
    a = audio.split_dataset(synthetic_manifest(50), (0.8, 0.1, 0.1), seed=77)
    b = audio.split_dataset(synthetic_manifest(50), (0.8, 0.1, 0.1), seed=77)
    assert [e.split_tag for e in a.entries] == [e.split_tag for e in b.entries]
    c = audio.split_dataset(synthetic_manifest(50), (0.8, 0.1, 0.1), seed=78)
    assert [e.split_tag for e in a.entries] != [e.split_tag for e in c.entries]


def test_split_is_partition_and_permutation():
    result = audio.split_dataset(synthetic_manifest(41), (0.7, 0.15, 0.15), seed=5)
    ids = sorted(e.chunk_id for e in result.entries)
    assert ids == list(range(41))  # multiset of ids unchanged
    total = sum(result.split_sizes().values())
    assert total == 41  # every chunk in exactly one split


def test_split_too_few_chunks():
    with pytest.raises(InsufficientDataError):
        audio.split_dataset(synthetic_manifest(2), (0.88, 0.06, 0.06), seed=0)


def test_split_validates_ratios():
    with pytest.raises(ContractError):
        audio.split_dataset(synthetic_manifest(10), (0.9, 0.06, 0.06), seed=0)
    with pytest.raises(ContractError):
        audio.split_dataset(synthetic_manifest(10), (1.0, 0.0, 0.0), seed=0)


# -- manifest file ------------------------------------------------------------


def test_manifest_roundtrip_and_format(tmp_path):
    manifest = audio.split_dataset(synthetic_manifest(5), (0.6, 0.2, 0.2), seed=3)
    path = tmp_path / "m.tsv"
    audio.save_manifest(manifest, path)
    text = path.read_text().splitlines()
    assert text[0] == "#corpus_id=test seed=3 chunk_len=10"
    assert len(text) == 6
    fields = text[1].split("\t")
    assert len(fields) == 4 and fields[0] == "0"
    loaded = audio.load_manifest(path)
    assert loaded.corpus_id == manifest.corpus_id
    assert loaded.shuffle_seed == 3
    assert loaded.chunk_length_samples == 10
    assert [e.split_tag for e in loaded.entries] == [e.split_tag for e in manifest.entries]


def test_manifest_rejects_bad_tag(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("#corpus_id=x seed=0 chunk_len=4\n0\tsrc\t0\tbogus\n")
    with pytest.raises(ContractError):
        audio.load_manifest(path)


def test_audio_buffer_validates():
    with pytest.raises(ContractError):
        AudioBuffer(np.array([np.nan]), 16000)
    with pytest.raises(ContractError):
        AudioBuffer(np.zeros(4), 0)
