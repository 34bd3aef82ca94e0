#pragma once

#include <string>

#include "tined/models.hpp"

namespace tined {

/// Checkpoint container: magic "TINED1", a little-endian uint64 header
/// length, a JSON header describing the architecture and matrix shapes, then
/// the raw little-endian doubles of every matrix in header order. Round
/// trips are bitwise exact.
void save_teacher(TeacherModel& t, const std::string& path);
TeacherModel load_teacher(const std::string& path);

void save_student(StudentMLP& s, const std::string& path);
StudentMLP load_student(const std::string& path);

/// Peeks at the header: "teacher" or "student".
std::string checkpoint_type(const std::string& path);

}  // namespace tined
