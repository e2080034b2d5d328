//! Tag-length-value encoding of [`SkillSpec`]: the skill type, then one block
//! each for the generator, feedback controller, termination handler and
//! sensor topics.

use crate::kinematics::{JointVector, Vector6, Wrench};
use crate::sim::GripperCommand;
use crate::skill::{FeedbackSpec, JointDmpSpec, SkillSpec, SkillType, TermSpec, TrajGenSpec};

use super::codec::{malformed, DecodeError, Reader, Writer};

/// Nesting limit for `AnyOf` on the wire, well above what validation allows.
const MAX_TERM_DEPTH: usize = 8;

pub fn skill_type_tag(t: SkillType) -> u16 {
    match t {
        SkillType::JointPositionSkill => 1,
        SkillType::CartesianPoseSkill => 2,
        SkillType::ImpedancePoseSkill => 3,
        SkillType::ForceSkill => 4,
        SkillType::GripperSkill => 5,
        SkillType::TorqueSkill => 6,
    }
}

fn skill_type_from(tag: u16) -> Result<SkillType, DecodeError> {
    SkillType::ALL
        .into_iter()
        .find(|t| skill_type_tag(*t) == tag)
        .ok_or(DecodeError::UnknownVariant {
            kind: "skill type",
            tag,
        })
}

fn write_traj(w: &mut Writer, t: &TrajGenSpec) {
    match t {
        TrajGenSpec::MinJerkJoint { goal, duration } => w.block(1, |w| {
            w.array(goal.as_slice());
            w.f64(*duration);
        }),
        TrajGenSpec::MinJerkPose { goal, duration } => w.block(2, |w| {
            w.pose(goal);
            w.f64(*duration);
        }),
        TrajGenSpec::JointDmp(d) => w.block(3, |w| {
            w.array(&d.weights);
            w.array(d.goal.as_slice());
            w.f64s([d.tau, d.alpha, d.beta, d.alpha_x]);
            w.u32(d.n_basis);
        }),
        TrajGenSpec::StreamedJointSetpoint { initial } => {
            w.block(4, |w| w.array(initial.as_slice()))
        }
        TrajGenSpec::StreamedPoseSetpoint { initial } => w.block(5, |w| w.pose(initial)),
        TrajGenSpec::Hold => w.block(6, |_| {}),
        TrajGenSpec::GripperMove(c) => w.block(7, |w| {
            w.f64s([c.target_width, c.speed, c.grasp_force]);
        }),
        TrajGenSpec::ConstantWrench { wrench, duration } => w.block(8, |w| {
            w.array(wrench.force.as_slice());
            w.array(wrench.torque.as_slice());
            w.f64(*duration);
        }),
    }
}

fn read_traj(r: &mut Reader) -> Result<TrajGenSpec, DecodeError> {
    let (tag, mut b) = r.block()?;
    Ok(match tag {
        1 => TrajGenSpec::MinJerkJoint {
            goal: JointVector::from(b.array_n::<7>("goal")?),
            duration: b.f64()?,
        },
        2 => TrajGenSpec::MinJerkPose {
            goal: b.pose()?,
            duration: b.f64()?,
        },
        3 => {
            let weights = b.array()?;
            let goal = JointVector::from(b.array_n::<7>("goal")?);
            let [tau, alpha, beta, alpha_x] = b.f64s::<4>()?;
            TrajGenSpec::JointDmp(JointDmpSpec {
                weights,
                goal,
                tau,
                alpha,
                beta,
                alpha_x,
                n_basis: b.u32()?,
            })
        }
        4 => TrajGenSpec::StreamedJointSetpoint {
            initial: JointVector::from(b.array_n::<7>("initial")?),
        },
        5 => TrajGenSpec::StreamedPoseSetpoint { initial: b.pose()? },
        6 => TrajGenSpec::Hold,
        7 => {
            let [target_width, speed, grasp_force] = b.f64s::<3>()?;
            TrajGenSpec::GripperMove(GripperCommand {
                target_width,
                speed,
                grasp_force,
            })
        }
        8 => {
            let f = b.array_n::<3>("force")?;
            let t = b.array_n::<3>("torque")?;
            TrajGenSpec::ConstantWrench {
                wrench: Wrench::from_array([f[0], f[1], f[2], t[0], t[1], t[2]]),
                duration: b.f64()?,
            }
        }
        tag => {
            return Err(DecodeError::UnknownVariant {
                kind: "trajectory generator",
                tag,
            })
        }
    })
}

fn write_feedback(w: &mut Writer, f: &FeedbackSpec) {
    match f {
        FeedbackSpec::InternalJointPd { kp, kd } => w.block(1, |w| {
            w.array(kp.as_slice());
            w.array(kd.as_slice());
        }),
        FeedbackSpec::CartesianImpedance { stiffness, damping } => w.block(2, |w| {
            w.array(stiffness.as_slice());
            w.array(damping.as_slice());
        }),
        FeedbackSpec::Passthrough => w.block(3, |_| {}),
        FeedbackSpec::ForceToTorque => w.block(4, |_| {}),
    }
}

fn read_feedback(r: &mut Reader) -> Result<FeedbackSpec, DecodeError> {
    let (tag, mut b) = r.block()?;
    Ok(match tag {
        1 => FeedbackSpec::InternalJointPd {
            kp: JointVector::from(b.array_n::<7>("kp")?),
            kd: JointVector::from(b.array_n::<7>("kd")?),
        },
        2 => FeedbackSpec::CartesianImpedance {
            stiffness: Vector6::from(b.array_n::<6>("stiffness")?),
            damping: Vector6::from(b.array_n::<6>("damping")?),
        },
        3 => FeedbackSpec::Passthrough,
        4 => FeedbackSpec::ForceToTorque,
        tag => {
            return Err(DecodeError::UnknownVariant {
                kind: "feedback controller",
                tag,
            })
        }
    })
}

fn write_term(w: &mut Writer, t: &TermSpec) {
    match t {
        TermSpec::Time { duration } => w.block(1, |w| w.f64(*duration)),
        TermSpec::JointGoal { tolerance } => w.block(2, |w| w.f64(*tolerance)),
        TermSpec::PoseGoal { pos_tol, ori_tol } => w.block(3, |w| w.f64s([*pos_tol, *ori_tol])),
        TermSpec::Contact { force_threshold } => w.block(4, |w| w.array(force_threshold)),
        TermSpec::AnyOf(children) => w.block(5, |w| {
            w.u32(children.len() as u32);
            for c in children {
                write_term(w, c);
            }
        }),
    }
}

fn read_term(r: &mut Reader, depth: usize) -> Result<TermSpec, DecodeError> {
    if depth > MAX_TERM_DEPTH {
        return Err(malformed("termination nesting too deep"));
    }
    let (tag, mut b) = r.block()?;
    Ok(match tag {
        1 => TermSpec::Time { duration: b.f64()? },
        2 => TermSpec::JointGoal {
            tolerance: b.f64()?,
        },
        3 => {
            let [pos_tol, ori_tol] = b.f64s::<2>()?;
            TermSpec::PoseGoal { pos_tol, ori_tol }
        }
        4 => TermSpec::Contact {
            force_threshold: b.array_n::<6>("contact threshold")?,
        },
        5 => {
            let n = b.u32()? as usize;
            // Every child needs at least a 6-byte block header.
            if n > b.remaining() / 6 {
                return Err(malformed(format!("AnyOf claims {n} children")));
            }
            let children = (0..n)
                .map(|_| read_term(&mut b, depth + 1))
                .collect::<Result<Vec<_>, _>>()?;
            TermSpec::AnyOf(children)
        }
        tag => {
            return Err(DecodeError::UnknownVariant {
                kind: "termination handler",
                tag,
            })
        }
    })
}

pub fn encode_skill_spec(spec: &SkillSpec) -> Vec<u8> {
    let mut w = Writer::new();
    write_skill_spec(&mut w, spec);
    w.buf
}

pub(crate) fn write_skill_spec(w: &mut Writer, spec: &SkillSpec) {
    w.u16(skill_type_tag(spec.skill_type));
    write_traj(w, &spec.traj_gen);
    write_feedback(w, &spec.feedback);
    write_term(w, &spec.termination);
    w.block(1, |w| {
        w.u32(spec.sensor_topics.len() as u32);
        for t in &spec.sensor_topics {
            w.string(t);
        }
    });
}

pub fn decode_skill_spec(bytes: &[u8]) -> Result<SkillSpec, DecodeError> {
    let mut r = Reader::new(bytes);
    let spec = read_skill_spec(&mut r)?;
    // Unknown trailing blocks are skipped, but must still be well formed.
    while !r.is_empty() {
        r.block()?;
    }
    Ok(spec)
}

pub(crate) fn read_skill_spec(r: &mut Reader) -> Result<SkillSpec, DecodeError> {
    let skill_type = skill_type_from(r.u16()?)?;
    let traj_gen = read_traj(r)?;
    let feedback = read_feedback(r)?;
    let termination = read_term(r, 1)?;
    let (tag, mut b) = r.block()?;
    if tag != 1 {
        return Err(DecodeError::UnknownVariant {
            kind: "topic list",
            tag,
        });
    }
    let n = b.u32()? as usize;
    if n > b.remaining() / 4 {
        return Err(malformed(format!("topic list claims {n} entries")));
    }
    let sensor_topics = (0..n).map(|_| b.string()).collect::<Result<Vec<_>, _>>()?;
    Ok(SkillSpec {
        skill_type,
        traj_gen,
        feedback,
        termination,
        sensor_topics,
    })
}
