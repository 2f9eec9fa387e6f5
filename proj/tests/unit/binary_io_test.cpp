#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pann/binary_io.hpp"
#include "pann/error.hpp"

namespace pann {
namespace {

TEST(ByteIo, ScalarsRoundTrip) {
  ByteWriter w;
  w.magic({'A', 'B', 'C', 'D'});
  w.u8(200);
  w.u32(0xDEADBEEF);
  w.u64(0x0123456789ABCDEFull);
  w.f32(-1.5f);
  w.f64(std::numeric_limits<double>::denorm_min());
  w.f64(-0.0);
  const Bytes b = w.take();
  EXPECT_EQ(b.size(), 4u + 1 + 4 + 8 + 4 + 8 + 8);
  ByteReader r(b, "buf");
  r.expect_magic({'A', 'B', 'C', 'D'});
  EXPECT_EQ(r.u8(), 200);
  EXPECT_EQ(r.u32(), 0xDEADBEEFu);
  EXPECT_EQ(r.u64(), 0x0123456789ABCDEFull);
  EXPECT_EQ(r.f32(), -1.5f);
  EXPECT_EQ(r.f64(), std::numeric_limits<double>::denorm_min());
  const double z = r.f64();
  EXPECT_EQ(z, 0.0);
  EXPECT_TRUE(std::signbit(z));
  EXPECT_EQ(r.remaining(), 0u);
}

TEST(ByteIo, LittleEndianLayout) {
  ByteWriter w;
  w.u32(0x04030201);
  const Bytes b = w.take();
  EXPECT_EQ(b, (Bytes{1, 2, 3, 4}));
}

TEST(ByteIo, ReadingPastTheEndIsTruncation) {
  const Bytes b{1, 2, 3};
  ByteReader r(b, "short");
  try {
    r.u32();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTruncated);
    EXPECT_TRUE(e.is_format_error());
  }
}

TEST(ByteIo, MagicAndVersionChecks) {
  ByteWriter w;
  w.magic({'P', 'A', 'N', 'C'});
  w.u32(7);
  const Bytes b = w.take();
  ByteReader r(b, "x");
  EXPECT_THROW(r.expect_magic({'P', 'A', 'N', 'D'}), Error);
  ByteReader r2(b, "x");
  r2.expect_magic({'P', 'A', 'N', 'C'});
  EXPECT_THROW(r2.expect_version(1), Error);
}

TEST(ByteIo, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  const Bytes a{'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace pann
