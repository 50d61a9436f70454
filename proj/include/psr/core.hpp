#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace psr {

template <class Scalar>
using vec2_type = Eigen::Matrix<Scalar, 2, 1>;
template <class Scalar>
using vec3_type = Eigen::Matrix<Scalar, 3, 1>;
template <class Scalar>
using rgb_type = Eigen::Array<Scalar, 3, 1>;
template <class Scalar>
using mat3_type = Eigen::Matrix<Scalar, 3, 3>;

using Vec2 = vec2_type<double>;
using Vec3 = vec3_type<double>;
using Rgb = rgb_type<double>;
using Mat3 = mat3_type<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvPi = 1.0 / kPi;

// Exit-code classes used by the command line front end:
//   ConfigError -> 2, DataError/FormatError -> 3, InvariantError -> 4.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

class DataError : public Error
{
public:
    using Error::Error;
};

class FormatError : public DataError
{
public:
    using DataError::DataError;
};

class DimensionError : public DataError
{
public:
    using DataError::DataError;
};

class DegeneracyError : public DataError
{
public:
    using DataError::DataError;
};

class InvariantError : public Error
{
public:
    using Error::Error;
};

/// Number of worker threads used by parallel_for. 0 means hardware concurrency.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(i) for i in [begin, end) over the worker pool. Work items must be
/// independent; results therefore do not depend on the thread count. The first
/// exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

template <class Scalar>
inline Scalar clamp01(Scalar x)
{
    return x < Scalar(0) ? Scalar(0) : (x > Scalar(1) ? Scalar(1) : x);
}

template <class Scalar>
inline Scalar lerp(Scalar a, Scalar b, Scalar t)
{
    return a + (b - a) * t;
}

/// Any unit vector orthogonal to n (n must be unit length).
template <class Scalar>
inline vec3_type<Scalar> any_orthogonal(const vec3_type<Scalar>& n)
{
    const vec3_type<Scalar> helper = std::abs(n.x()) < Scalar(0.9)
        ? vec3_type<Scalar>::UnitX()
        : vec3_type<Scalar>::UnitY();
    return n.cross(helper).normalized();
}

/// Orthonormal basis (t, b, n) with n as the third column.
template <class Scalar>
inline mat3_type<Scalar> tangent_frame(const vec3_type<Scalar>& n)
{
    mat3_type<Scalar> frame;
    const vec3_type<Scalar> t = any_orthogonal(n);
    frame.col(0) = t;
    frame.col(1) = n.cross(t);
    frame.col(2) = n;
    return frame;
}

} // namespace psr
