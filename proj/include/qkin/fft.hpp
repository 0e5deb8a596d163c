#pragma once

// Thin RAII layer over FFTW for in-place 1d complex transforms.
//
// Plans are created once per (length, sign) under a global lock and shared;
// execution uses the new-array interface on thread-local fftw_malloc'd
// buffers, which keeps every call thread-safe and bit-reproducible.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <utility>

namespace qkin::fft {

using complex = std::complex<double>;

enum class sign : int { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

namespace detail {

struct plan_deleter {
  void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using plan_ptr = std::unique_ptr<fftw_plan_s, plan_deleter>;

struct buffer_deleter {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using buffer_ptr = std::unique_ptr<fftw_complex, buffer_deleter>;

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline fftw_plan plan_for(std::size_t n, sign dir) {
  static std::map<std::pair<std::size_t, int>, plan_ptr> cache;
  std::lock_guard lock(planner_mutex());
  auto key = std::make_pair(n, static_cast<int>(dir));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.get();
  buffer_ptr scratch(fftw_alloc_complex(n));
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), scratch.get(), scratch.get(),
                                 static_cast<int>(dir), FFTW_ESTIMATE);
  cache.emplace(key, plan_ptr(p));
  return p;
}

inline fftw_plan many_plan_for(std::size_t n, std::size_t howmany, std::size_t stride,
                               std::size_t dist, sign dir) {
  using key_t = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, int>;
  static std::map<key_t, plan_ptr> cache;
  std::lock_guard lock(planner_mutex());
  const key_t key{n, howmany, stride, dist, static_cast<int>(dir)};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.get();
  const std::size_t span_len = (n - 1) * stride + (howmany - 1) * dist + 1;
  buffer_ptr scratch(fftw_alloc_complex(span_len));
  const int len = static_cast<int>(n);
  fftw_plan p = fftw_plan_many_dft(1, &len, static_cast<int>(howmany), scratch.get(), nullptr,
                                   static_cast<int>(stride), static_cast<int>(dist), scratch.get(), nullptr,
                                   static_cast<int>(stride), static_cast<int>(dist), static_cast<int>(dir),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, plan_ptr(p));
  return p;
}

struct workspace {
  buffer_ptr data;
  std::size_t capacity = 0;

  fftw_complex* get(std::size_t n) {
    if (n > capacity) {
      data.reset(fftw_alloc_complex(n));
      capacity = n;
    }
    return data.get();
  }
};

inline workspace& thread_workspace() {
  thread_local workspace ws;
  return ws;
}

} // namespace detail

/// Unnormalized in-place DFT: X_k = sum_j x_j exp(-+2 pi i jk/n).
inline void transform(std::span<complex> data, sign dir) {
  const std::size_t n = data.size();
  if (n == 0) return;
  fftw_plan p = detail::plan_for(n, dir);
  fftw_complex* buf = detail::thread_workspace().get(n);
  auto* raw = reinterpret_cast<complex*>(buf);
  std::copy(data.begin(), data.end(), raw);
  fftw_execute_dft(p, buf, buf);
  std::copy(raw, raw + n, data.begin());
}

/// Apply `transform` to every line of a row-major block along one axis.
/// `outer` lines of stride n*inner, each with `inner` interleaved columns.
/// Uses one batched, alignment-agnostic plan per (n, inner, dir).
inline void transform_lines(std::span<complex> block, std::size_t outer, std::size_t n,
                            std::size_t inner, sign dir) {
  if (n == 0 || outer == 0 || inner == 0) return;
  // inner == 1: batch all lines at once; otherwise batch the interleaved columns.
  const std::size_t howmany = inner == 1 ? outer : inner;
  const std::size_t stride = inner;
  const std::size_t dist = inner == 1 ? n : 1;
  fftw_plan p = detail::many_plan_for(n, howmany, stride, dist, dir);
  auto* raw = reinterpret_cast<fftw_complex*>(block.data());
  if (inner == 1) {
    fftw_execute_dft(p, raw, raw);
    return;
  }
  for (std::size_t o = 0; o < outer; ++o) {
    fftw_complex* base = raw + o * n * inner;
    fftw_execute_dft(p, base, base);
  }
}

} // namespace qkin::fft
