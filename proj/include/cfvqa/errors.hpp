#pragma once

#include <stdexcept>
#include <string>

namespace cfvqa {

// Base for everything the library throws. The CLI maps ValidationError to
// exit code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class IndexError : public Error {
  public:
    using Error::Error;
};

class TrainingError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class EmptyDatasetError : public Error {
  public:
    using Error::Error;
};

class InfeasibleSplitError : public Error {
  public:
    using Error::Error;
};

// Missing image file and no feature vector for an image_ref.
class InputError : public Error {
  public:
    using Error::Error;
};

}  // namespace cfvqa
