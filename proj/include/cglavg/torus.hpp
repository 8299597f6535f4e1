#pragma once

// Fourier representation of complex-valued, zero-mean fields on the torus
// T^d = [0, period)^d, d in {1, 2, 3}.
//
// A field is stored by its plain Fourier amplitudes: u(x) = sum_k c_k exp(i k.x 2pi/period)
// over the lattice |k_i| <= N/2. Norms follow the L^2(T^d) inner product
// <u, v> = Re int u conj(v), so ||u||^2 = V sum_k |c_k|^2 with V = period^d.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"

namespace cglavg {

using Complex = std::complex<double>;
using Wavevector = std::array<int, 3>;

namespace detail {

/// Process-wide cache of in-place FFTW plans. Plans are created under a lock;
/// fftw_execute_dft on caller-owned buffers is thread-safe.
class FftPlans {
public:
    static FftPlans& instance() {
        static FftPlans plans;
        return plans;
    }

    fftw_plan get(int dimension, int size, int sign) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(dimension, size, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        std::array<int, 3> dims{size, size, size};
        std::size_t total = 1;
        for (int i = 0; i < dimension; ++i) total *= static_cast<std::size_t>(size);
        std::vector<Complex> dummy(total);
        auto* buf = reinterpret_cast<fftw_complex*>(dummy.data());
        fftw_plan plan = fftw_plan_dft(dimension, dims.data(), buf, buf, sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

    FftPlans(const FftPlans&) = delete;
    FftPlans& operator=(const FftPlans&) = delete;

private:
    FftPlans() = default;
    ~FftPlans() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void fft_inplace(std::span<Complex> data, int dimension, int size, int sign) {
    fftw_plan plan = FftPlans::instance().get(dimension, size, sign);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
}

inline int wrap_index(int k, int size) { return ((k % size) + size) % size; }

}  // namespace detail

/// Lattice of wavevectors {k in Z^d : |k_i| <= N/2} with its spectral data.
class TorusGrid {
public:
    TorusGrid(int dimension, int modes_per_dim, double period, double dealias_fraction)
        : dimension_(dimension),
          modes_(modes_per_dim),
          period_(period),
          dealias_fraction_(dealias_fraction) {
        if (dimension < 1 || dimension > 3)
            throw InvalidArgument("torus dimension must be 1, 2 or 3");
        if (modes_per_dim < 4 || modes_per_dim % 2 != 0)
            throw InvalidArgument("modes_per_dim must be even and >= 4");
        if (!(period > 0.0) || !std::isfinite(period))
            throw InvalidArgument("period must be positive");
        if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
            throw InvalidArgument("dealias_fraction must lie in (0, 1]");

        const int side = modes_ + 1;
        const int half = modes_ / 2;
        collocation_ = 2 * modes_;
        wavenumber_unit_ = 2.0 * std::numbers::pi / period_;
        volume_ = std::pow(period_, dimension_);
        dealias_cutoff_ = static_cast<int>(std::floor(dealias_fraction_ * half + 1e-12));

        std::size_t count = 1;
        for (int i = 0; i < dimension_; ++i) count *= static_cast<std::size_t>(side);
        wavevectors_.resize(count);
        eigenvalues_.resize(count);
        collocation_index_.resize(count);
        in_dealias_band_.resize(count);

        for (std::size_t flat = 0; flat < count; ++flat) {
            Wavevector k{0, 0, 0};
            std::size_t rem = flat;
            for (int i = dimension_ - 1; i >= 0; --i) {
                k[static_cast<std::size_t>(i)] = static_cast<int>(rem % side) - half;
                rem /= side;
            }
            wavevectors_[flat] = k;
            double k2 = 0.0;
            bool inside = true;
            std::size_t fft_flat = 0;
            for (int i = 0; i < dimension_; ++i) {
                const int ki = k[static_cast<std::size_t>(i)];
                k2 += static_cast<double>(ki) * ki;
                inside = inside && std::abs(ki) <= dealias_cutoff_;
                fft_flat = fft_flat * static_cast<std::size_t>(collocation_) +
                           static_cast<std::size_t>(detail::wrap_index(ki, collocation_));
            }
            eigenvalues_[flat] = wavenumber_unit_ * wavenumber_unit_ * k2;
            collocation_index_[flat] = fft_flat;
            in_dealias_band_[flat] = inside;
        }
        mean_index_ = flat_index(Wavevector{0, 0, 0});

        // P_n ordering: eigenvalue, then lexicographic wavevector; mean mode excluded.
        for (std::size_t flat = 0; flat < count; ++flat)
            if (flat != mean_index_) mode_order_.push_back(flat);
        std::stable_sort(mode_order_.begin(), mode_order_.end(),
                         [this](std::size_t a, std::size_t b) {
                             if (eigenvalues_[a] != eigenvalues_[b])
                                 return eigenvalues_[a] < eigenvalues_[b];
                             return wavevectors_[a] < wavevectors_[b];
                         });
        for (std::size_t flat : mode_order_)
            if (in_dealias_band_[flat]) ++dealiased_mode_count_;
    }

    int dimension() const noexcept { return dimension_; }
    int modes_per_dim() const noexcept { return modes_; }
    double period() const noexcept { return period_; }
    double dealias_fraction() const noexcept { return dealias_fraction_; }
    /// Largest |k_i| kept by the dealias mask.
    int dealias_cutoff() const noexcept { return dealias_cutoff_; }
    /// Collocation points per dimension (2N).
    int collocation_points() const noexcept { return collocation_; }
    std::size_t collocation_size() const noexcept {
        std::size_t n = 1;
        for (int i = 0; i < dimension_; ++i) n *= static_cast<std::size_t>(collocation_);
        return n;
    }
    double volume() const noexcept { return volume_; }
    /// First nonzero eigenvalue of -Laplacian.
    double lambda_star() const noexcept { return wavenumber_unit_ * wavenumber_unit_; }

    /// Number of lattice wavevectors, (N+1)^d, mean mode included.
    std::size_t size() const noexcept { return wavevectors_.size(); }
    std::size_t mean_index() const noexcept { return mean_index_; }
    const Wavevector& wavevector(std::size_t flat) const { return wavevectors_.at(flat); }
    double eigenvalue(std::size_t flat) const { return eigenvalues_.at(flat); }
    bool in_dealias_band(std::size_t flat) const { return in_dealias_band_.at(flat); }
    std::size_t collocation_index(std::size_t flat) const { return collocation_index_[flat]; }

    /// Nonzero modes sorted by eigenvalue then lexicographic wavevector.
    std::span<const std::size_t> mode_order() const noexcept { return mode_order_; }
    /// Number of nonzero modes inside the dealias band (the default Galerkin size).
    std::size_t dealiased_mode_count() const noexcept { return dealiased_mode_count_; }

    /// Flat index of k; lexicographic over (k_1, ..., k_d) with k_1 slowest.
    std::size_t flat_index(const Wavevector& k) const {
        const int side = modes_ + 1;
        const int half = modes_ / 2;
        std::size_t flat = 0;
        for (int i = 0; i < dimension_; ++i) {
            const int ki = k[static_cast<std::size_t>(i)];
            if (std::abs(ki) > half) throw InvalidArgument("wavevector outside lattice");
            flat = flat * static_cast<std::size_t>(side) + static_cast<std::size_t>(ki + half);
        }
        return flat;
    }

private:
    int dimension_;
    int modes_;
    double period_;
    double dealias_fraction_;
    int collocation_ = 0;
    int dealias_cutoff_ = 0;
    double wavenumber_unit_ = 1.0;
    double volume_ = 1.0;
    std::size_t mean_index_ = 0;
    std::size_t dealiased_mode_count_ = 0;
    std::vector<Wavevector> wavevectors_;
    std::vector<double> eigenvalues_;
    std::vector<std::size_t> collocation_index_;
    std::vector<bool> in_dealias_band_;
    std::vector<std::size_t> mode_order_;
};

using GridPtr = std::shared_ptr<const TorusGrid>;

inline GridPtr make_grid(int dimension, int modes_per_dim,
                         double period = 2.0 * std::numbers::pi,
                         double dealias_fraction = 2.0 / 3.0) {
    return std::make_shared<const TorusGrid>(dimension, modes_per_dim, period, dealias_fraction);
}

/// Complex Fourier amplitudes of a zero-mean field on a TorusGrid.
class SpectralField {
public:
    SpectralField() = default;
    explicit SpectralField(GridPtr grid) : grid_(std::move(grid)), coeffs_(grid_->size()) {}
    SpectralField(GridPtr grid, std::vector<Complex> coeffs)
        : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != grid_->size())
            throw InvalidArgument("coefficient count does not match the grid lattice");
        coeffs_[grid_->mean_index()] = 0.0;
    }

    /// Single Fourier mode amp * exp(i k.x).
    static SpectralField mode(GridPtr grid, const Wavevector& k, Complex amp) {
        SpectralField f(grid);
        const std::size_t idx = grid->flat_index(k);
        if (idx != grid->mean_index()) f.coeffs_[idx] = amp;
        return f;
    }

    const GridPtr& grid_ptr() const noexcept { return grid_; }
    const TorusGrid& grid() const { return *grid_; }
    std::size_t size() const noexcept { return coeffs_.size(); }
    std::span<const Complex> coeffs() const noexcept { return coeffs_; }
    std::span<Complex> coeffs() noexcept { return coeffs_; }
    Complex operator[](std::size_t i) const { return coeffs_[i]; }
    Complex& operator[](std::size_t i) { return coeffs_[i]; }
    Complex at(const Wavevector& k) const { return coeffs_[grid_->flat_index(k)]; }

    bool all_finite() const noexcept {
        return std::all_of(coeffs_.begin(), coeffs_.end(), [](Complex c) {
            return std::isfinite(c.real()) && std::isfinite(c.imag());
        });
    }

    SpectralField& operator+=(const SpectralField& o) {
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o) {
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
        return *this;
    }
    SpectralField& operator*=(Complex s) {
        for (auto& c : coeffs_) c *= s;
        return *this;
    }
    /// this += s * o
    SpectralField& axpy(Complex s, const SpectralField& o) {
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * o.coeffs_[i];
        return *this;
    }

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(Complex s, SpectralField a) { return a *= s; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= Complex(s, 0.0); }

private:
    GridPtr grid_;
    std::vector<Complex> coeffs_;
};

/// Real L^2 inner product Re int u conj(v).
inline double inner(const SpectralField& u, const SpectralField& v) {
    double acc = 0.0;
    const auto a = u.coeffs();
    const auto b = v.coeffs();
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return acc * u.grid().volume();
}

/// ||u - v||^2 without materializing the difference.
inline double distance_squared(const SpectralField& u, const SpectralField& v) {
    double acc = 0.0;
    const auto a = u.coeffs();
    const auto b = v.coeffs();
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
    return acc * u.grid().volume();
}

inline double norm_squared(const SpectralField& u) {
    double acc = 0.0;
    for (Complex c : u.coeffs()) acc += std::norm(c);
    return acc * u.grid().volume();
}

/// ||u||_m = <(-Laplacian)^m u, u>^{1/2}; m = 0 is the L^2 norm.
inline double sobolev_norm(const SpectralField& u, int m) {
    if (m < 0 || m > 3) throw InvalidArgument("sobolev_norm supports m in {0,1,2,3}");
    if (!u.all_finite()) throw InvalidArgument("sobolev_norm: non-finite field");
    const TorusGrid& g = u.grid();
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double w = m == 0 ? 1.0 : std::pow(g.eigenvalue(i), m);
        acc += w * std::norm(u[i]);
    }
    return std::sqrt(acc * g.volume());
}

/// Caller-owned scratch buffer for physical-space evaluations.
class Workspace {
public:
    std::vector<Complex>& buffer(std::size_t n) {
        if (buffer_.size() != n) buffer_.assign(n, Complex{});
        return buffer_;
    }

private:
    std::vector<Complex> buffer_;
};

namespace detail {

/// Fills `phys` (size^d points) with the field values on a uniform grid of
/// `size` points per dimension. Requires size > N so no lattice modes alias.
inline void synthesize(const SpectralField& u, int size, std::vector<Complex>& phys) {
    const TorusGrid& g = u.grid();
    const int d = g.dimension();
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(size);
    phys.assign(total, Complex{});
    for (std::size_t flat = 0; flat < u.size(); ++flat) {
        const Complex c = u[flat];
        if (c == Complex{}) continue;
        std::size_t idx;
        if (size == g.collocation_points()) {
            idx = g.collocation_index(flat);
        } else {
            const auto& k = g.wavevector(flat);
            idx = 0;
            for (int i = 0; i < d; ++i)
                idx = idx * static_cast<std::size_t>(size) +
                      static_cast<std::size_t>(wrap_index(k[static_cast<std::size_t>(i)], size));
        }
        phys[idx] = c;
    }
    fft_inplace(phys, d, size, FFTW_BACKWARD);
}

}  // namespace detail

/// Physical values on the 2N-per-dimension collocation grid.
inline std::vector<Complex> to_physical(const SpectralField& u) {
    std::vector<Complex> phys;
    detail::synthesize(u, u.grid().collocation_points(), phys);
    return phys;
}

/// (int |u|^p)^{1/p} for p in {2, 4, 6}. The quadrature grid has
/// max(2N, pN/2 + 2) points per dimension, which integrates |u|^p exactly for
/// lattice-supported fields.
inline double lp_norm(const SpectralField& u, double p) {
    if (p != 2.0 && p != 4.0 && p != 6.0) throw InvalidArgument("lp_norm supports p in {2,4,6}");
    if (!u.all_finite()) throw InvalidArgument("lp_norm: non-finite field");
    const TorusGrid& g = u.grid();
    const int n = g.modes_per_dim();
    int size = std::max(2 * n, static_cast<int>(p) * n / 2 + 2);
    if (size % 2 != 0) ++size;
    std::vector<Complex> phys;
    detail::synthesize(u, size, phys);
    double acc = 0.0;
    for (Complex z : phys) acc += std::pow(std::norm(z), p / 2.0);
    const double integral = acc * g.volume() / static_cast<double>(phys.size());
    return std::pow(integral, 1.0 / p);
}

/// P_n: keeps the n lowest modes of the eigenvalue ordering, zeroes the rest.
inline SpectralField project(const SpectralField& u, std::size_t n) {
    const TorusGrid& g = u.grid();
    const auto order = g.mode_order();
    SpectralField out(u.grid_ptr());
    const std::size_t keep = std::min(n, order.size());
    for (std::size_t j = 0; j < keep; ++j) out[order[j]] = u[order[j]];
    return out;
}

/// Spectral coefficients of |u|^2 u: collocation on 2N points per dimension,
/// pointwise product, analysis, 2/3-rule mask and zero-mean projection.
/// Alias-free for every lattice-supported input.
inline SpectralField cubic_term(const SpectralField& u, Workspace& ws) {
    const TorusGrid& g = u.grid();
    const int size = g.collocation_points();
    auto& phys = ws.buffer(g.collocation_size());
    detail::synthesize(u, size, phys);
    for (Complex& z : phys) z *= std::norm(z);
    detail::fft_inplace(phys, g.dimension(), size, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(phys.size());
    SpectralField out(u.grid_ptr());
    bool finite = true;
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        if (!g.in_dealias_band(flat) || flat == g.mean_index()) continue;
        const Complex c = phys[g.collocation_index(flat)] * scale;
        finite = finite && std::isfinite(c.real()) && std::isfinite(c.imag());
        out[flat] = c;
    }
    if (!finite) throw BlowUpError("cubic_term overflow", 0.0);
    return out;
}

inline SpectralField cubic_term(const SpectralField& u) {
    Workspace ws;
    return cubic_term(u, ws);
}

}  // namespace cglavg
