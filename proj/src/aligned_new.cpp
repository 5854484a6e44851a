// Every heap block starts on a 64-byte boundary, so vectorized kernels that
// peel to an aligned address see the same split on every run and results do
// not depend on heap layout.

#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlign = 64;

void* grab(std::size_t n) noexcept {
  n = (n + kAlign - 1) & ~(kAlign - 1);
  return std::aligned_alloc(kAlign, n ? n : kAlign);
}

void* grab_or_throw(std::size_t n) {
  void* p = grab(n);
  if (!p) throw std::bad_alloc();
  return p;
}

}  // namespace

void* operator new(std::size_t n) { return grab_or_throw(n); }
void* operator new[](std::size_t n) { return grab_or_throw(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return grab(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return grab(n); }
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }
