import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flickersim.signals import (
    SHAPES,
    CarrierSpec,
    ModulatingSpec,
    SignalBuffer,
    clipped_cosine_rms,
    cycle_position,
    modulate,
    synthesize_carrier,
    synthesize_modulating,
    thd,
)

FS = 80_000.0


def carrier(m_c, duration=0.2, fs=FS):
    return synthesize_carrier(CarrierSpec(50.0, 230.0, m_c), fs, duration)


class TestCarrier:
    def test_pure_sinusoid(self):
        c = carrier(1.0)
        t = c.times
        npt.assert_allclose(c.samples, 230 * np.sqrt(2) * np.cos(2 * np.pi * 50 * t), atol=1e-9)
        assert thd(c, 50.0) < 1e-12

    @pytest.mark.parametrize("m_c", [1.0, 0.95, 0.8, 0.5, 0.1, 0.01])
    def test_rms_equals_uc(self, m_c):
        assert carrier(m_c).rms() == pytest.approx(230.0, rel=1e-6)

    @pytest.mark.parametrize("m_c", [0.8, 0.3, 0.1])
    def test_shape_is_clipped_cosine(self, m_c):
        c = carrier(m_c)
        peak = np.max(np.abs(c.samples))
        # flat tops: a large share of samples sits on the clip level
        assert np.mean(np.isclose(np.abs(c.samples), peak)) > 0.2
        unclipped = np.cos(2 * np.pi * 50 * c.times) * peak / m_c
        inside = np.abs(unclipped) < peak
        npt.assert_allclose(c.samples[inside], unclipped[inside], rtol=1e-9, atol=1e-9)

    def test_thd_reference_levels(self):
        assert thd(carrier(0.8), 50.0) == pytest.approx(0.08, abs=0.01)
        assert thd(carrier(0.1), 50.0) == pytest.approx(0.43, abs=0.02)

    def test_closed_form_rms_matches_quadrature(self):
        theta = np.linspace(0, 2 * np.pi, 2_000_001)[:-1]
        for m_c in (0.9, 0.5, 0.1):
            x = np.clip(np.cos(theta), -m_c, m_c)
            assert clipped_cosine_rms(m_c) == pytest.approx(np.sqrt(np.mean(x**2)), rel=1e-9)

    @pytest.mark.parametrize("bad", [0.0, -0.2, 1.01])
    def test_rejects_bad_clipping(self, bad):
        with pytest.raises(ValueError, match="m_c"):
            CarrierSpec(m_c=bad)

    def test_rejects_low_rate(self):
        with pytest.raises(ValueError, match="sample_rate"):
            synthesize_carrier(CarrierSpec(), 999.0, 1.0)

    def test_rejects_short_duration(self):
        with pytest.raises(ValueError, match="duration"):
            synthesize_carrier(CarrierSpec(), FS, 0.005)

    def test_chunks_match_single_shot(self):
        spec = CarrierSpec(m_c=0.8)
        whole = synthesize_carrier(spec, FS, count=10_000)
        parts = [synthesize_carrier(spec, FS, start=s, count=2_500).samples for s in range(0, 10_000, 2_500)]
        assert np.array_equal(whole.samples, np.concatenate(parts))


def test_thd_monotone_in_clipping():
    levels = np.linspace(0.05, 1.0, 20)
    values = [thd(carrier(m, 0.02), 50.0) for m in levels]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] == 0 or values[-1] < 1e-12


def test_thd_square_wave_oracle():
    # analytic odd-harmonic series for an ideal square wave
    oracle = np.sqrt(np.pi**2 / 8 - 1)
    n = 2**16
    x = np.where(np.arange(n) < n // 2, 1.0, -1.0)
    sig = SignalBuffer(x, 50.0 * n)
    assert thd(sig, 50.0, n_harmonics=4000) == pytest.approx(oracle, abs=2e-3)


def test_thd_rejects_fractional_periods():
    with pytest.raises(ValueError, match="integer"):
        thd(carrier(0.8, 0.0301), 50.0)


def test_thd_needs_two_harmonics():
    with pytest.raises(ValueError):
        thd(carrier(0.8), 50.0, n_harmonics=1)


class TestModulating:
    def mod(self, shape, f_m=1.0, fs=800.0, duration=1.0, phase=0.0):
        return synthesize_modulating(ModulatingSpec(shape, f_m, 5.0, phase), fs, duration)

    def test_rectangular_plateaus(self):
        m = self.mod("rect")
        assert set(np.unique(m.samples)) == {-1.0, 1.0}
        assert np.all(m.samples[:400] == 1.0) and np.all(m.samples[400:] == -1.0)

    def test_trapezoid_segments(self):
        m = self.mod("trap")
        t = m.times
        assert m.samples[np.searchsorted(t, 0.125)] == pytest.approx(0.0, abs=1e-12)
        plateau = (t >= 0.25) & (t < 0.5)
        assert np.all(m.samples[plateau] == 1.0)
        low = t >= 0.75
        assert np.all(m.samples[low] == -1.0)
        assert m.samples[0] == -1.0

    def test_triangle_period(self):
        m = self.mod("tri")
        assert np.mean(m.samples) == pytest.approx(0.0, abs=1e-12)
        assert np.ptp(m.samples) == pytest.approx(2.0)

    def test_sine_phase(self):
        m = self.mod("sin")
        npt.assert_allclose(m.samples, np.sin(2 * np.pi * m.times), atol=1e-12)

    def test_phase_shift(self):
        a = self.mod("rect", phase=0.5)
        assert a.samples[0] == -1.0

    @pytest.mark.parametrize("shape", SHAPES)
    def test_zero_mean_and_unit_extrema(self, shape):
        m = self.mod(shape, f_m=4.0, duration=2.0)
        assert np.mean(m.samples) == pytest.approx(0.0, abs=1e-12)
        assert m.samples.max() == pytest.approx(1.0, abs=1e-12)
        assert m.samples.min() == pytest.approx(-1.0, abs=1e-12)

    @pytest.mark.parametrize("shape", SHAPES)
    def test_exact_periodicity(self, shape):
        # 208.8 Hz at 80 kHz: the period 80000/208.8 is not an integer, but
        # 1044 periods span exactly 400000 samples
        spec = ModulatingSpec(shape, 208.8, 5.0)
        a = synthesize_modulating(spec, FS, start=0, count=1000)
        b = synthesize_modulating(spec, FS, start=400_000, count=1000)
        assert np.array_equal(a.samples, b.samples)

    def test_unknown_shape(self):
        with pytest.raises(ValueError, match="shape"):
            ModulatingSpec("sawtooth")

    @pytest.mark.parametrize("f_m", [0.0, -1.0])
    def test_rejects_nonpositive_frequency(self, f_m):
        with pytest.raises(ValueError, match="f_m"):
            ModulatingSpec("sin", f_m)

    def test_rejects_low_rate(self):
        with pytest.raises(ValueError, match="sample_rate"):
            synthesize_modulating(ModulatingSpec("sin", 1000.0), 10_000.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(
    f=st.floats(0.01, 1050.0),
    start=st.integers(0, 10**8),
    offset=st.floats(0.0, 0.999),
)
def test_cycle_position_matches_float(f, start, offset):
    pos = cycle_position(f, FS, start, 16, offset)
    assert np.all((pos >= 0) & (pos < 1))
    from fractions import Fraction

    fr = Fraction(f).limit_denominator(10_000)
    off = Fraction(offset % 1.0).limit_denominator(10_000)
    exact = [float((n * fr / 80_000 + off) % 1) for n in range(start, start + 16)]
    npt.assert_allclose(pos, exact, atol=1e-12)


class TestModulate:
    def bufs(self, mod_values, carrier_values=None):
        mod_values = np.asarray(mod_values, float)
        c = np.ones_like(mod_values) if carrier_values is None else np.asarray(carrier_values, float)
        return SignalBuffer(c, 1000.0), SignalBuffer(mod_values, 1000.0)

    def test_zero_depth_is_identity(self):
        c = carrier(0.8)
        m = synthesize_modulating(ModulatingSpec("rect", 10.0), FS, 0.2)
        assert np.array_equal(modulate(c, m, 0.0).samples, c.samples)

    def test_single_sample(self):
        c, m = self.bufs([1.0])
        assert modulate(c, m, 10.0).samples[0] == pytest.approx(1.05)

    def test_rectangular_envelope_ratio(self):
        c, m = self.bufs([1.0, -1.0, 1.0, -1.0])
        y = modulate(c, m, 10.0).samples
        assert y.max() / y.min() == pytest.approx(1.05 / 0.95)

    def test_rejects_mismatch(self):
        c, m = self.bufs([1.0, 1.0])
        with pytest.raises(ValueError, match="length"):
            modulate(c, SignalBuffer([1.0], 1000.0), 1.0)
        with pytest.raises(ValueError, match="rate"):
            modulate(c, SignalBuffer([1.0, 1.0], 500.0), 1.0)

    @pytest.mark.parametrize("depth", [-1.0, 200.0, 250.0])
    def test_rejects_bad_depth(self, depth):
        c, m = self.bufs([1.0])
        with pytest.raises(ValueError, match="depth"):
            modulate(c, m, depth)

    @settings(max_examples=30, deadline=None)
    @given(depth=st.floats(0.0, 199.0), m_c=st.floats(0.05, 1.0), shape=st.sampled_from(SHAPES))
    def test_envelope_bounds(self, depth, m_c, shape):
        c = synthesize_carrier(CarrierSpec(m_c=m_c), 20_000.0, 0.05)
        m = synthesize_modulating(ModulatingSpec(shape, 37.0), 20_000.0, 0.05)
        y = modulate(c, m, depth).samples
        nz = np.abs(c.samples) > 1e-9
        ratio = y[nz] / c.samples[nz]
        assert np.all(ratio >= 1 - depth / 200 - 1e-12)
        assert np.all(ratio <= 1 + depth / 200 + 1e-12)


class TestInterchange:
    def test_binary_roundtrip(self, tmp_path):
        c = carrier(0.8, 0.02)
        path = tmp_path / "x.bin"
        c.write_binary(path)
        back = SignalBuffer.read_binary(path)
        assert back.sample_rate == c.sample_rate
        assert np.array_equal(back.samples, c.samples)

    def test_binary_layout(self):
        b = SignalBuffer([1.0, -2.0], 1000.0).to_bytes()
        assert len(b) == 16 + 16
        assert np.frombuffer(b[:8], "<f8")[0] == 1000.0
        assert int.from_bytes(b[8:16], "little") == 2
        assert list(np.frombuffer(b[16:], "<f8")) == [1.0, -2.0]

    def test_truncated_frame(self):
        b = SignalBuffer([1.0, -2.0], 1000.0).to_bytes()
        with pytest.raises(ValueError):
            SignalBuffer.from_bytes(b[:-8])

    def test_csv_roundtrip(self, tmp_path):
        c = carrier(0.1, 0.02)
        path = tmp_path / "x.csv"
        c.to_csv(path)
        first = path.read_text().splitlines()[0].split(",")
        assert len(first) == 2 and float(first[0]) == 0.0
        back = SignalBuffer.from_csv(path)
        assert back.sample_rate == pytest.approx(FS, rel=1e-6)
        npt.assert_allclose(back.samples, c.samples, rtol=1e-9)

    def test_buffer_is_immutable(self):
        c = carrier(1.0, 0.02)
        with pytest.raises(ValueError):
            c.samples[0] = 0.0
