import numpy as np
import pytest

from bofsent.prosody import (
    PcmSignal,
    ProsodyConfig,
    estimate_f0_shs,
    extract_prosody,
    frame_signal,
    loudness,
    read_pcm,
    track_descriptors,
    voicing_probability,
    write_pcm,
)
from util import tone

SR = 16000


def _block(signal, index=0, window=0.05, hop=0.01):
    return frame_signal(signal, window, hop)[index]


class TestFrameSignal:
    def test_block_count_one_second(self):
        sig = PcmSignal(samples=np.zeros(SR), sample_rate=SR)
        blocks = frame_signal(sig, 0.05, 0.01)
        assert blocks.shape == (96, 800)

    def test_exactly_one_window(self):
        sig = PcmSignal(samples=np.ones(800), sample_rate=SR)
        assert frame_signal(sig, 0.05, 0.01).shape[0] == 1

    def test_too_short(self):
        sig = PcmSignal(samples=np.zeros(160), sample_rate=SR)
        with pytest.raises(ValueError, match="shorter"):
            frame_signal(sig, 0.05, 0.01)

    def test_hann_weighting(self):
        sig = PcmSignal(samples=np.ones(800), sample_rate=SR)
        block = frame_signal(sig, 0.05, 0.01)[0]
        assert np.allclose(block, np.hanning(800))


class TestEstimateF0:
    def test_pure_sine_220(self):
        f0, salience = estimate_f0_shs(_block(tone(220.0, 0.05)), SR)
        assert abs(f0 - 220.0) < 2.0
        assert salience > 0

    def test_all_zero_block(self):
        f0, salience = estimate_f0_shs(np.zeros(800), SR)
        assert salience == 0.0
        assert 55.0 <= f0 <= 400.0

    def test_sawtooth_no_octave_error(self):
        t = np.arange(800) / SR
        saw = 2.0 * (t * 150.0 - np.floor(t * 150.0 + 0.5))
        f0, _ = estimate_f0_shs(saw * np.hanning(800), SR)
        assert abs(f0 - 150.0) < 2.0

    def test_amplitude_scale_invariance(self):
        block = _block(tone(180.0, 0.05))
        reference, _ = estimate_f0_shs(block, SR)
        for scale in (1e-3, 0.5, 7.0, 1e3):
            scaled, _ = estimate_f0_shs(scale * block, SR)
            assert scaled == pytest.approx(reference, abs=1e-9)

    def test_period_shift_robustness(self):
        freq = 200.0
        period = SR / freq  # exactly 80 samples
        sig = tone(freq, 0.2)
        base = frame_signal(sig, 0.05, 0.01)[0]
        f_ref, _ = estimate_f0_shs(base, SR)
        for periods in (1, 2, 5):
            shift = int(periods * period)
            shifted = sig.samples[shift : shift + 800] * np.hanning(800)
            f_shift, _ = estimate_f0_shs(shifted, SR)
            assert abs(f_shift - f_ref) < 1.0

    def test_tone_sweep_accuracy_and_octaves(self):
        for freq in (100.0, 150.0, 200.0, 300.0, 400.0):
            track = extract_prosody(tone(freq, 0.5))
            voiced = [f.f0 for f in track.frames if f.f0 > 0]
            assert voiced, f"no voiced frames at {freq} Hz"
            octave_errors = sum(
                1 for f in voiced if abs(f - 2 * freq) < 3.0 or abs(2 * f - freq) < 3.0
            )
            assert octave_errors / len(voiced) < 0.05
            for f in voiced:
                assert abs(f - freq) < 3.0


class TestVoicing:
    def test_pure_sine_high(self):
        block = _block(tone(220.0, 0.05))
        _, salience = estimate_f0_shs(block, SR)
        assert voicing_probability(block, salience, SR) >= 0.9

    def test_zero_block(self):
        assert voicing_probability(np.zeros(800), 0.0, SR) == 0.0

    def test_white_noise_low(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            block = rng.standard_normal(800) * np.hanning(800)
            _, salience = estimate_f0_shs(block, SR)
            assert voicing_probability(block, salience, SR) <= 0.5

    def test_fuzz_range(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            block = rng.uniform(-5, 5) * rng.standard_normal(800)
            _, salience = estimate_f0_shs(block, SR)
            v = voicing_probability(block, salience, SR)
            assert 0.0 <= v <= 1.0
            assert loudness(block) >= 0.0


class TestLoudness:
    def test_zero(self):
        assert loudness(np.zeros(100)) == 0.0

    def test_full_scale_square(self):
        square = np.ones(800)
        square[::2] = -1.0
        assert loudness(square) == pytest.approx(1.0)

    def test_halving_ratio(self):
        square = np.ones(800)
        square[::2] = -1.0
        assert loudness(square) / loudness(0.5 * square) == pytest.approx(2.0**0.3)


class TestExtractProsody:
    def test_steady_tone_all_voiced(self):
        track = extract_prosody(tone(220.0, 1.0))
        assert len(track) == 96
        for frame in track.frames:
            assert frame.voicing >= 0.45
            assert abs(frame.f0 - 220.0) < 3.0

    def test_silence_all_unvoiced(self):
        track = extract_prosody(PcmSignal(samples=np.zeros(SR), sample_rate=SR))
        for frame in track.frames:
            assert frame.f0 == 0.0
            assert frame.voicing == 0.0
            assert frame.loudness == 0.0

    def test_tone_then_silence_transition(self):
        config = ProsodyConfig()
        samples = np.concatenate([tone(220.0, 0.5).samples, np.zeros(SR // 2)])
        track = extract_prosody(PcmSignal(samples=samples, sample_rate=SR), config)
        voiced = [f.f0 > 0 for f in track.frames]
        splice_frame = int(0.5 / config.hop)
        last_voiced = max(i for i, flag in enumerate(voiced) if flag)
        assert voiced.index(True) <= 2, "voiced prefix should start immediately"
        assert abs(last_voiced - splice_frame) <= 2
        assert not any(voiced[last_voiced + 1 :]), "suffix after transition must stay unvoiced"

    def test_unvoiced_iff_f0_zero(self):
        rng = np.random.default_rng(9)
        samples = np.concatenate([tone(150.0, 0.3).samples, 0.1 * rng.standard_normal(SR // 2)])
        track = extract_prosody(PcmSignal(samples=samples, sample_rate=SR))
        for frame in track.frames:
            assert (frame.f0 == 0.0) == (frame.voicing < 0.45)
            if frame.f0 > 0:
                assert 55.0 <= frame.f0 <= 400.0

    def test_descriptor_layout(self):
        config = ProsodyConfig()
        track = extract_prosody(tone(200.0, 0.2), config)
        rows = track_descriptors(track, config)
        assert rows.shape == (len(track), 3)
        assert np.allclose(rows[:, 0] * config.f0_max, [f.f0 for f in track.frames])


class TestPcmIo:
    def test_roundtrip(self, tmp_path):
        sig = tone(330.0, 0.1)
        path = tmp_path / "x.pcm"
        write_pcm(path, sig)
        back = read_pcm(path)
        assert back.sample_rate == SR
        assert np.abs(back.samples - sig.samples).max() < 1.0 / 32000

    def test_headerless_requires_rate(self, tmp_path):
        path = tmp_path / "raw.pcm"
        path.write_bytes(np.zeros(100, dtype="<i2").tobytes())
        with pytest.raises(ValueError, match="sample rate"):
            read_pcm(path)
        assert read_pcm(path, sample_rate=8000).sample_rate == 8000
