#pragma once

namespace leaf::test {

inline constexpr double kFdStep = 1e-5;
// Two-channel layer norms curve sharply where channels nearly tie, so the
// end-to-end check needs a finer step to keep truncation error small.
inline constexpr double kModelFdStep = 1e-6;
inline constexpr double kOpGradTol = 1e-4;
inline constexpr double kModelGradTol = 1e-3;
inline constexpr double kExactTol = 1e-12;
inline constexpr double kGoldenTol = 1e-10;

}  // namespace leaf::test
