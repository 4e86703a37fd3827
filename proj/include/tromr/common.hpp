#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tromr {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Grayscale images: rows = y, cols = x, intensity in [0,1], 1 = white paper.
using ImageF = Eigen::MatrixXf;
using ImageU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct EncodeError : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct TruncationError : DecodeError { using DecodeError::DecodeError; };
struct AlignmentError : Error { using Error::Error; };
struct MergeError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct LoadError : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };
struct LayoutError : Error { using Error::Error; };
struct RenderError : Error { using Error::Error; };

}  // namespace tromr
