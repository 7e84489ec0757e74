use std::collections::VecDeque;

use super::codec::{decode, encode, ControlFrame, Message, ID_ESTOP, ID_JOINT_VEL_CMD, ID_VELOCITY_CMD, ID_VESSEL_CMD};

/// Ordered frame queues between the controller side and one machine.
///
/// Commands flow down, telemetry flows up; both are drained once per
/// simulation step. Once an `EStop` frame has been delivered the link stays
/// latched and drops every actuation frame that would move the machine until
/// [`MachineLink::rearm`] is called.
#[derive(Debug, Default)]
pub struct MachineLink {
    down: VecDeque<ControlFrame>,
    up: VecDeque<ControlFrame>,
    latched: bool,
    suppressed: u64,
}

fn is_actuation(id: u32) -> bool {
    matches!(id, ID_VELOCITY_CMD | ID_VESSEL_CMD | ID_JOINT_VEL_CMD)
}

impl MachineLink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, frame: ControlFrame) {
        self.down.push_back(frame);
    }

    /// Encode and queue a command. Messages that fail to encode are a
    /// programming error on the controller side.
    pub fn send_message(&mut self, message: &Message) {
        let frame = encode(message).unwrap_or_else(|e| panic!("unencodable command {message:?}: {e}"));
        self.send(frame);
    }

    pub fn pending_commands(&self) -> usize {
        self.down.len()
    }

    /// Machine side: take every queued command in FIFO order.
    pub fn deliver(&mut self) -> Vec<ControlFrame> {
        if self.down.iter().any(|f| f.id() == ID_ESTOP) {
            self.latched = true;
        }
        let mut out = Vec::with_capacity(self.down.len());
        for frame in self.down.drain(..) {
            if self.latched && is_actuation(frame.id()) {
                let moving = match frame.id() {
                    ID_VESSEL_CMD => true,
                    _ => decode(&frame).map(|m| m.is_nonzero_motion()).unwrap_or(true),
                };
                if moving {
                    self.suppressed += 1;
                    continue;
                }
            }
            out.push(frame);
        }
        out
    }

    pub fn publish(&mut self, frame: ControlFrame) {
        self.up.push_back(frame);
    }

    /// Controller side: take every telemetry frame in FIFO order.
    pub fn drain_telemetry(&mut self) -> Vec<ControlFrame> {
        self.up.drain(..).collect()
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }

    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }

    pub fn rearm(&mut self) {
        self.latched = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vel(v: f64) -> Message {
        Message::VelocityCmd { v, w: 0.0 }
    }

    #[test]
    fn fifo_order_preserved() {
        let mut link = MachineLink::new();
        link.send_message(&vel(0.1));
        link.send_message(&vel(0.2));
        let got: Vec<_> = link.deliver().iter().map(|f| decode(f).unwrap()).collect();
        assert_eq!(got, vec![vel(0.1), vel(0.2)]);
        assert!(link.deliver().is_empty());
    }

    #[test]
    fn estop_suppresses_motion_in_same_and_later_steps() {
        let mut link = MachineLink::new();
        link.send_message(&vel(1.0));
        link.send_message(&Message::EStop);
        link.send_message(&vel(0.5));
        link.send_message(&vel(0.0));
        let got: Vec<_> = link.deliver().iter().map(|f| decode(f).unwrap()).collect();
        assert_eq!(got, vec![Message::EStop, vel(0.0)]);
        link.send_message(&Message::JointVelCmd { joint: 1, vel: 0.2, valve: 400 });
        link.send_message(&Message::VesselCmd { angle: 0.0 });
        assert!(link.deliver().is_empty());
        assert_eq!(link.suppressed(), 4);
        link.rearm();
        link.send_message(&vel(0.3));
        assert_eq!(link.deliver().len(), 1);
    }
}
